"""Batch experiments: every strategy on every customer under each forecast mode.

A run writes one directory::

    config.json          resolved configuration
    cells/<key>.json     one record per (customer, strategy, forecast)
    cells/<key>.npz      the schedule behind it
    results.csv          all records, fixed column and row order
    timing.csv           median daily solve time per customer and strategy
    rankings.csv         savings and aging ranks (when >= 2 strategies)

``results.csv`` and ``rankings.csv`` hold no wall-clock quantities, so two
runs with the same configuration produce identical files. Timings live in
``timing.csv``; ``hemsbench rank`` folds them in as a speed rank and writes
``rankings_timed.csv``.

Customers are processed by a pool of worker processes. Cluster policies need
every customer's teacher schedule, so they run in a second, sequential pass.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import time
import traceback
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Mapping, Sequence

import numpy as np
from scipy.stats import rankdata

from . import config as C
from .battery import replay_schedule
from .core import SLOTS_PER_DAY, Schedule, validate_schedule
from .data import CustomerRecord, load_cohort, synth_cohort
from .degradation import simulate_aging
from .dp import backward_induction, dp_schedule, simulate_policy
from .economics import economics_record
from .forecast import ForecastMode, forecast_series
from .heuristics import scm_schedule, scm_toua_schedule, toua_schedule
from .milp import build_instance, rolling_horizon, solve_milp
from .pfa import (NeuralPolicy, build_training_set, cluster_customers, execute_policy,
                  rollout_error, select_representative, train_policy)

log = logging.getLogger(__name__)

RESULT_FIELDS = (
    "customer", "pv_kwp", "profile", "strategy", "forecast", "status", "error",
    "annual_cost", "baseline_cost", "savings", "levelized_savings", "fit_revenue",
    "irr", "irr_inflated", "irr_levelized", "soh_20", "ebl", "fec", "mean_doc",
    "violations", "replay_violations", "cluster",
)


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return "nan" if math.isnan(v) else f"{v:.10g}"
    return str(v)


def cell_key(customer: str, strategy: str, forecast: str) -> str:
    return f"{customer}__{strategy}__{forecast}"


def customer_seed(seed: int, customer: str) -> int:
    """Per-customer seed that does not depend on cohort order or worker layout."""
    return int(np.random.SeedSequence([seed, zlib.crc32(customer.encode())]).generate_state(1)[0])


# ------------------------------------------------------------------ cohort

def load_customers(cfg: Mapping[str, Any]) -> list[CustomerRecord]:
    co = cfg["cohort"]
    if co.get("source", "synth") == "csv":
        recs = load_cohort(co["path"])
    else:
        recs = synth_cohort(int(co.get("n", 10)), int(co.get("seed", 0)), co.get("profile_mix"),
                            days=int(co.get("days", 365)))
    days = co.get("days")
    if days and co.get("source", "synth") == "csv":
        recs = [r.head(int(days)) if r.days > int(days) else r for r in recs]
    return recs


# ------------------------------------------------------------------ cells

@dataclass
class Context:
    rec: CustomerRecord
    cfg: dict

    def __post_init__(self):
        c = self.cfg
        self.tariff = C.tariff_from(c)
        self.system = self.rec.system(grid_limit=float(c["milp"].get("grid_limit", 20.0)))
        self.model = C.efficiency_from(c)
        self.policy = C.toua_from(c)
        self.seed = customer_seed(int(c["seed"]), self.rec.id)
        self.d = self.rec.demand.values
        self.p = self.rec.pv.values
        self._fc: dict[str, tuple[np.ndarray, np.ndarray]] = {}

    def forecasts(self, mode: str):
        if mode not in self._fc:
            fm = ForecastMode(mode, seed=self.seed if mode == "persistence" else None)
            self._fc[mode] = forecast_series(self.d, self.p, fm)
        return self._fc[mode]


def _milp(ctx: Context, mode: str) -> Schedule:
    m = ctx.cfg["milp"]
    dfc, pfc = ctx.forecasts(mode)
    return rolling_horizon(dfc, pfc, ctx.tariff, ctx.system, demand=ctx.d, pv=ctx.p,
                           horizon_days=int(m["horizon_days"]), gap_tol=float(m["gap_tol"]),
                           backend=m["backend"])


def _dp(ctx: Context, mode: str) -> Schedule:
    dfc, pfc = ctx.forecasts(mode)
    return dp_schedule(ctx.d, ctx.p, ctx.tariff, ctx.system, ctx.model, C.mdp_from(ctx.cfg),
                       demand_fc=dfc, pv_fc=pfc)


def _scm_toua(ctx: Context, mode: str) -> Schedule:
    dfc, pfc = ctx.forecasts(mode)
    return scm_toua_schedule(ctx.d, ctx.p, pfc, ctx.system, ctx.policy, ctx.tariff,
                             demand_forecast=dfc)


RUNNERS: dict[str, Callable[[Context, str], Schedule]] = {
    "scm": lambda ctx, mode: scm_schedule(ctx.d, ctx.p, ctx.system),
    "toua": lambda ctx, mode: toua_schedule(ctx.d, ctx.p, ctx.system, ctx.policy, ctx.tariff),
    "scm_toua": _scm_toua,
    "milp": _milp,
    "dp": _dp,
}


def evaluate_cell(ctx: Context, strategy: str, mode: str, sched: Schedule,
                  out_dir: Path | None, extra: Mapping[str, Any] | None = None) -> dict[str, Any]:
    """Validation, economics and aging for one schedule; persists the cell."""
    cfg = ctx.cfg
    rec = ctx.rec
    viol = validate_schedule(sched, ctx.d, ctx.p, ctx.system.battery)
    replay = replay_schedule(sched, ctx.system.battery, C.nonlinear_from(cfg))
    row: dict[str, Any] = {"customer": rec.id, "pv_kwp": rec.pv_kwp, "profile": rec.profile or "",
                           "strategy": strategy, "forecast": mode, "status": "ok", "error": ""}
    econ = economics_record(rec.id, strategy, mode, sched, ctx.d, rec.pv_kwp, ctx.tariff,
                            C.cost_from(cfg))
    aging = simulate_aging(sched, ctx.system.battery, C.aging_from(cfg))
    row.update({k: econ[k] for k in ("annual_cost", "baseline_cost", "savings", "levelized_savings",
                                     "fit_revenue", "irr", "irr_inflated", "irr_levelized")})
    row.update(soh_20=aging.soh_report, ebl=aging.ebl, fec=aging.fec, mean_doc=aging.mean_doc,
               violations=len(viol), replay_violations=len(replay.violations), cluster="")
    if extra:
        row.update(extra)
    if not np.all(np.diff(aging.soh) <= 1e-12):
        raise RuntimeError("SOH trajectory is not monotone")
    if out_dir is not None:
        key = cell_key(rec.id, strategy, mode)
        np.savez_compressed(out_dir / "cells" / f"{key}.npz", grid_import=sched.grid_import,
                            grid_export=sched.grid_export, charge=sched.charge,
                            discharge=sched.discharge, soc=sched.soc,
                            initial_soc=sched.initial_soc, dt=sched.dt)
        with open(out_dir / "cells" / f"{key}.json", "w", encoding="utf-8") as fh:
            json.dump({k: row[k] for k in RESULT_FIELDS}, fh, indent=1, sort_keys=True,
                      default=float)
    return row


def _error_row(rec: CustomerRecord, strategy: str, mode: str, exc: BaseException) -> dict[str, Any]:
    row = {k: "" for k in RESULT_FIELDS}
    row.update(customer=rec.id, pv_kwp=rec.pv_kwp, profile=rec.profile or "", strategy=strategy,
               forecast=mode, status="error", error=f"{type(exc).__name__}: {exc}")
    return row


# ------------------------------------------------------------------ timing

def _median_time(fn: Callable[[], Any], repeats: int) -> float:
    ts = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        ts.append(time.perf_counter() - t0)
    return float(np.median(ts))


def daily_timers(ctx: Context, policies: Mapping[str, NeuralPolicy]) -> dict[str, Callable[[], Any]]:
    """One-day solve for each strategy, as it would run online."""
    n_days = ctx.rec.days
    day = min(int(ctx.cfg["timing"].get("day", 7)), n_days - 1)
    sl = slice(day * SLOTS_PER_DAY, (day + 1) * SLOTS_PER_DAY)
    sl2 = slice(day * SLOTS_PER_DAY, min(day + 2, n_days) * SLOTS_PER_DAY)
    d, p, sysc = ctx.d[sl], ctx.p[sl], ctx.system
    m = ctx.cfg["milp"]
    mdp = C.mdp_from(ctx.cfg)

    def milp():
        inst = build_instance(ctx.d[sl2], ctx.p[sl2], ctx.tariff, sysc, sysc.initial_soc)
        solve_milp(inst, float(m["gap_tol"]), backend=m["backend"])

    def dp():
        t = backward_induction(d, p, ctx.tariff, sysc.battery, ctx.model, mdp, dt=sysc.dt)
        simulate_policy(t, d, p, sysc.battery, sysc.initial_soc, ctx.model)

    timers = {
        "scm": lambda: scm_schedule(d, p, sysc),
        "toua": lambda: toua_schedule(d, p, sysc, ctx.policy, ctx.tariff),
        "scm_toua": lambda: scm_toua_schedule(d, p, p, sysc, ctx.policy, ctx.tariff),
        "milp": milp,
        "dp": dp,
    }
    for name, pol in policies.items():
        timers[name] = (lambda pol=pol: execute_policy(pol, d, p, ctx.tariff, sysc))
    return timers


# ------------------------------------------------------------------ stage 1

@dataclass
class CustomerOutput:
    rows: list[dict[str, Any]] = field(default_factory=list)
    timings: dict[str, float] = field(default_factory=dict)
    teacher: Schedule | None = None
    pfag_candidate: NeuralPolicy | None = None
    error: str = ""


def _train(ctx: Context, teacher: Schedule, recurrent: bool) -> NeuralPolicy:
    pcfg = ctx.cfg["pfa"]
    W = int(pcfg.get("window", 48))
    ts = build_training_set(teacher, ctx.d, ctx.p, ctx.tariff, window=W, recurrent=recurrent)
    check = None
    if recurrent:
        # closed-loop check over the final days of the record
        k = min(int(pcfg.get("rollout_days", 14)), max(ctx.rec.days // 5, 1))
        sl = slice(len(teacher) - k * SLOTS_PER_DAY, len(teacher))
        part = teacher.slice(sl.start, sl.stop)
        check = lambda pol: rollout_error(pol, part, ctx.d[sl], ctx.p[sl], ctx.tariff,  # noqa: E731
                                          ctx.system)
    min_samples = min(1000, max(len(ts) // 2, 1))
    return train_policy(ts, C.arch_from(ctx.cfg), seed=ctx.seed % (2 ** 31),
                        y_scale=ctx.system.battery.max_power, min_samples=min_samples,
                        rollout_check=check)


def run_customer(rec: CustomerRecord, cfg: dict, out_dir: str | None) -> CustomerOutput:
    """Every non-cluster cell of one customer, plus what the cluster pass needs."""
    out = CustomerOutput()
    od = Path(out_dir) if out_dir else None
    ctx = Context(rec, cfg)
    strategies, modes = cfg["strategies"], cfg["forecast"]
    needs_teacher = any(s in strategies for s in ("pfas", "pfag"))
    cache: dict[tuple[str, str], Schedule] = {}

    for strategy in [s for s in strategies if s in RUNNERS]:
        for mode in modes:
            try:
                sched = RUNNERS[strategy](ctx, mode)
                cache[(strategy, mode)] = sched
                out.rows.append(evaluate_cell(ctx, strategy, mode, sched, od))
            except Exception as exc:  # recorded per cell, the run goes on
                log.error("cell %s failed:\n%s", cell_key(rec.id, strategy, mode),
                          traceback.format_exc())
                out.rows.append(_error_row(rec, strategy, mode, exc))

    policies: dict[str, NeuralPolicy] = {}
    if needs_teacher:
        try:
            teacher = cache.get(("milp", "perfect")) or _milp(ctx, "perfect")
            out.teacher = teacher
            if "pfas" in strategies:
                policies["pfas"] = _train(ctx, teacher, recurrent=False)
            if "pfag" in strategies:
                out.pfag_candidate = _train(ctx, teacher, recurrent=True)
        except Exception as exc:
            log.error("teacher/training for %s failed:\n%s", rec.id, traceback.format_exc())
            out.error = f"{type(exc).__name__}: {exc}"
    if "pfas" in strategies:
        for mode in modes:
            try:
                if "pfas" not in policies:
                    raise RuntimeError(out.error or "no trained policy")
                dfc, pfc = ctx.forecasts(mode)
                sched = execute_policy(policies["pfas"], ctx.d, ctx.p, ctx.tariff, ctx.system,
                                       demand_fc=dfc, pv_fc=pfc)
                out.rows.append(evaluate_cell(ctx, "pfas", mode, sched, od))
            except Exception as exc:
                out.rows.append(_error_row(rec, "pfas", mode, exc))

    if cfg["timing"].get("enabled", True):
        timers = daily_timers(ctx, policies)
        if out.pfag_candidate is not None:
            timers["pfag"] = daily_timers(ctx, {"pfag": out.pfag_candidate})["pfag"]
        reps = int(cfg["timing"].get("repeats", 5))
        for s in strategies:
            if s not in timers:
                continue
            try:
                out.timings[s] = _median_time(timers[s], reps)
            except Exception:  # the cell itself already carries the error
                log.warning("timing %s for %s failed", s, rec.id, exc_info=True)
    return out


# ------------------------------------------------------------------ stage 2

def run_cluster_pass(recs: Sequence[CustomerRecord], outputs: Mapping[str, CustomerOutput],
                     cfg: dict, out_dir: Path | None) -> tuple[list[dict[str, Any]], dict[str, Any]]:
    """Cluster the cohort, pick representative policies and run them."""
    rows: list[dict[str, Any]] = []
    ok = [r for r in recs if outputs[r.id].pfag_candidate is not None]
    failed = [r for r in recs if outputs[r.id].pfag_candidate is None]
    for r in failed:
        for mode in cfg["forecast"]:
            rows.append(_error_row(r, "pfag", mode,
                                   RuntimeError(outputs[r.id].error or "no candidate policy")))
    if not ok:
        return rows, {}
    model = cluster_customers({r.id: r.demand.values for r in ok})
    W = int(cfg["pfa"].get("window", 48))
    tariff = C.tariff_from(cfg)
    held = {r.id: build_training_set(outputs[r.id].teacher, r.demand.values, r.pv.values, tariff,
                                     window=W, recurrent=True) for r in ok}
    reps: dict[int, str] = {}
    info: dict[str, Any] = {"labels": dict(model.labels), "representatives": {}, "scores": {}}
    for k in range(model.centroids.shape[1]):
        members = model.members(k)
        if not members:
            continue
        rep = select_representative({c: outputs[c].pfag_candidate for c in members},
                                    {c: held[c] for c in members})
        reps[k] = rep.customer
        info["representatives"][model.names[k]] = rep.customer
        info["scores"][model.names[k]] = dict(rep.scores)
    by_id = {r.id: r for r in ok}
    for cid in sorted(model.labels):
        k = model.labels[cid]
        pol = outputs[reps[k]].pfag_candidate
        ctx = Context(by_id[cid], cfg)
        for mode in cfg["forecast"]:
            try:
                dfc, pfc = ctx.forecasts(mode)
                sched = execute_policy(pol, ctx.d, ctx.p, ctx.tariff, ctx.system,
                                       demand_fc=dfc, pv_fc=pfc)
                rows.append(evaluate_cell(ctx, "pfag", mode, sched, out_dir,
                                          {"cluster": model.names[k]}))
            except Exception as exc:
                rows.append(_error_row(by_id[cid], "pfag", mode, exc))
    return rows, info


# ------------------------------------------------------------------ driver

@dataclass
class ExperimentResult:
    rows: list[dict[str, Any]]
    timings: list[dict[str, Any]]
    out_dir: Path | None
    clusters: dict[str, Any] = field(default_factory=dict)

    @property
    def failed(self) -> list[dict[str, Any]]:
        return [r for r in self.rows if r["status"] != "ok"]

    @property
    def exit_code(self) -> int:
        return 1 if self.failed else 0


def _sort_rows(rows):
    s_order = {s: i for i, s in enumerate(C.STRATEGIES)}
    f_order = {f: i for i, f in enumerate(C.FORECASTS)}
    return sorted(rows, key=lambda r: (r["customer"], s_order[r["strategy"]], f_order[r["forecast"]]))


def write_csv(path: Path, rows: Sequence[Mapping[str, Any]], fields: Sequence[str]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(fields)
        for r in rows:
            w.writerow([_fmt(r.get(f)) for f in fields])


def run_experiment(config: Mapping[str, Any], out_dir: str | Path | None = None, *,
                   customers: Sequence[CustomerRecord] | None = None) -> ExperimentResult:
    """Run the configured sweep and persist it under ``out_dir`` (if given)."""
    cfg = C.normalise(config)
    od = Path(out_dir) if out_dir is not None else None
    if od is not None:
        (od / "cells").mkdir(parents=True, exist_ok=True)
        with open(od / "config.json", "w", encoding="utf-8") as fh:
            json.dump(cfg, fh, indent=2, sort_keys=True, default=str)
    if not cfg["strategies"] or not cfg["forecast"]:
        res = ExperimentResult([], [], od)
        if od is not None:
            write_csv(od / "results.csv", [], RESULT_FIELDS)
        return res

    recs = list(customers) if customers is not None else load_customers(cfg)
    recs = sorted(recs, key=lambda r: r.id)
    workers = max(1, int(cfg.get("workers", 1)))
    od_s = str(od) if od is not None else None
    if workers == 1 or len(recs) == 1:
        outs = [run_customer(r, cfg, od_s) for r in recs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outs = list(pool.map(run_customer, recs, [cfg] * len(recs), [od_s] * len(recs)))
    outputs = {r.id: o for r, o in zip(recs, outs)}

    rows = [row for o in outs for row in o.rows]
    clusters: dict[str, Any] = {}
    if "pfag" in cfg["strategies"]:
        extra, clusters = run_cluster_pass(recs, outputs, cfg, od)
        rows += extra
    rows = _sort_rows(rows)
    timings = [{"customer": r.id, "strategy": s, "median_s": outputs[r.id].timings[s],
                "repeats": int(cfg["timing"].get("repeats", 5))}
               for r in recs for s in cfg["strategies"] if s in outputs[r.id].timings]
    res = ExperimentResult(rows, timings, od, clusters)
    if od is not None:
        write_csv(od / "results.csv", rows, RESULT_FIELDS)
        write_csv(od / "timing.csv", timings, ("customer", "strategy", "median_s", "repeats"))
        if clusters:
            with open(od / "clusters.json", "w", encoding="utf-8") as fh:
                json.dump(clusters, fh, indent=1, sort_keys=True)
        if len({r["strategy"] for r in rows if r["status"] == "ok"}) >= 2:
            write_csv(od / "rankings.csv", rank_strategies(rows), RANK_FIELDS)
        if cfg.get("plot_data"):
            write_plot_data(od, rows)
    return res


def write_plot_data(od: Path, rows) -> None:
    """SOC trajectories of every successful cell, long format."""
    with open(od / "plot_soc.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("customer", "strategy", "forecast", "slot", "soc_kwh"))
        for r in rows:
            if r["status"] != "ok":
                continue
            z = np.load(od / "cells" / f"{cell_key(r['customer'], r['strategy'], r['forecast'])}.npz")
            for t, e in enumerate(z["soc"]):
                w.writerow((r["customer"], r["strategy"], r["forecast"], t, f"{e:.6g}"))


def load_schedule(path: str | Path) -> Schedule:
    z = np.load(path)
    return Schedule(z["grid_import"], z["grid_export"], z["charge"], z["discharge"], z["soc"],
                    float(z["initial_soc"]), float(z["dt"]))


def read_results(out_dir: str | Path) -> tuple[list[dict[str, Any]], list[dict[str, Any]]]:
    od = Path(out_dir)

    def conv(v: str):
        try:
            return float(v)
        except ValueError:
            return v

    with open(od / "results.csv", newline="", encoding="utf-8") as fh:
        rows = [{k: (conv(v) if k not in ("customer", "profile") else v) for k, v in r.items()}
                for r in csv.DictReader(fh)]
    timings = []
    if (od / "timing.csv").exists():
        with open(od / "timing.csv", newline="", encoding="utf-8") as fh:
            timings = [{"customer": r["customer"], "strategy": r["strategy"],
                        "median_s": float(r["median_s"])} for r in csv.DictReader(fh)]
    return rows, timings


# ------------------------------------------------------------------ ranking

RANK_FIELDS = ("strategy", "median_time_s", "speed_rank", "median_savings_perfect",
               "savings_perfect_rank", "median_savings_persistence", "savings_persistence_rank",
               "median_soh_20", "aging_rank", "score")


def rank_strategies(rows: Sequence[Mapping[str, Any]],
                    timings: Sequence[Mapping[str, Any]] = ()) -> list[dict[str, Any]]:
    """Per-dimension ranks from cohort medians; 1 is best and ties share a rank.

    Dimensions: daily solve time (lower is better), savings under each
    forecast mode and SOH after 20 years under perfect forecasts (higher is
    better). ``score`` is the sum of the available ranks.
    """
    ok = [r for r in rows if r.get("status") == "ok"]
    strategies = [s for s in C.STRATEGIES if any(r["strategy"] == s for r in ok)]
    if len(strategies) < 2:
        raise ValueError("ranking needs at least two strategies")

    def med(vals):
        vals = [float(v) for v in vals]
        return float(np.median(vals)) if vals else math.nan

    table = {s: {"strategy": s} for s in strategies}
    for s in strategies:
        table[s]["median_time_s"] = med(t["median_s"] for t in timings if t["strategy"] == s)
        for mode in C.FORECASTS:
            table[s][f"median_savings_{mode}"] = med(
                r["savings"] for r in ok if r["strategy"] == s and r["forecast"] == mode)
        table[s]["median_soh_20"] = med(
            r["soh_20"] for r in ok if r["strategy"] == s and r["forecast"] == "perfect")

    def assign(col: str, rank_col: str, higher_better: bool):
        vals = np.array([table[s][col] for s in strategies])
        have = ~np.isnan(vals)
        ranks = np.full(len(strategies), math.nan)
        if have.any():
            key = -vals[have] if higher_better else vals[have]
            ranks[have] = rankdata(key, method="min")
        for s, rk in zip(strategies, ranks):
            table[s][rank_col] = rk if math.isnan(rk) else int(rk)

    assign("median_time_s", "speed_rank", False)
    assign("median_savings_perfect", "savings_perfect_rank", True)
    assign("median_savings_persistence", "savings_persistence_rank", True)
    assign("median_soh_20", "aging_rank", True)
    for s in strategies:
        rk = [table[s][c] for c in ("speed_rank", "savings_perfect_rank",
                                   "savings_persistence_rank", "aging_rank")]
        table[s]["score"] = int(sum(r for r in rk if not (isinstance(r, float) and math.isnan(r))))
    return [table[s] for s in strategies]
