"""Command-line entry point: ``hemsbench {simulate,rank,degrade,economics,synth}``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import config as C
from .battery import battery_for_pv
from .data import synth_cohort, write_cohort
from .degradation import simulate_aging
from .economics import economics_record
from .experiment import (RANK_FIELDS, cell_key, load_schedule, rank_strategies, read_results,
                         run_experiment, write_csv)


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="YAML or JSON configuration file")
    p.add_argument("--seed", type=int, help="master seed (forecast noise, training)")
    p.add_argument("--out", type=Path, help="run directory")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hemsbench",
                                 description="Benchmark PV-battery home energy management strategies.")
    sub = ap.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run strategies over a cohort")
    _common(sim)
    sim.add_argument("--strategies", help="comma-separated subset of " + ",".join(C.STRATEGIES))
    sim.add_argument("--forecast", choices=("perfect", "persistence", "both"))
    sim.add_argument("--battery-model", choices=("linear", "nonlinear"))
    sim.add_argument("--workers", type=int)
    sim.add_argument("--cohort", type=Path, help="cohort CSV (default: synthetic cohort)")
    sim.add_argument("--customers", type=int, help="synthetic cohort size")
    sim.add_argument("--days", type=int, help="simulate only the first N days")

    rk = sub.add_parser("rank", help="rank strategies, speed included, from a finished run")
    _common(rk)

    dg = sub.add_parser("degrade", help="recompute battery aging for a finished run")
    _common(dg)

    ec = sub.add_parser("economics", help="recompute economics for a finished run")
    _common(ec)

    sy = sub.add_parser("synth", help="write a synthetic cohort CSV")
    _common(sy)
    sy.add_argument("--customers", type=int, default=10)
    sy.add_argument("--days", type=int, default=365)
    return ap


def _load_run_config(args) -> dict:
    saved = args.out / "config.json" if args.out else None
    if args.config is not None:
        return C.load_config(args.config)
    if saved is not None and saved.exists():
        return C.load_config(saved)
    return C.load_config()


def cmd_simulate(args) -> int:
    over: dict = {}
    if args.strategies is not None:
        over["strategies"] = args.strategies
    if args.forecast is not None:
        over["forecast"] = args.forecast
    for key in ("battery_model", "workers", "seed"):
        if getattr(args, key) is not None:
            over[key] = getattr(args, key)
    cfg = C.load_config(args.config, **over)
    if args.cohort is not None:
        cfg["cohort"].update(source="csv", path=str(args.cohort))
    if args.customers is not None:
        cfg["cohort"]["n"] = args.customers
    if args.days is not None:
        cfg["cohort"]["days"] = args.days
    out = args.out or Path("hemsbench-run")
    res = run_experiment(cfg, out)
    n_ok = len(res.rows) - len(res.failed)
    print(f"{len(res.rows)} cells ({n_ok} ok, {len(res.failed)} failed) -> {out}")
    for r in res.failed:
        print(f"  FAILED {r['customer']} {r['strategy']} {r['forecast']}: {r['error']}")
    return res.exit_code


def _print_table(rows, fields) -> None:
    print("  ".join(f"{f:>14}" for f in fields))
    for r in rows:
        cells = []
        for f in fields:
            v = r.get(f, "")
            cells.append(f"{v:>14.6g}" if isinstance(v, float) else f"{v!s:>14}")
        print("  ".join(cells))


def cmd_rank(args) -> int:
    if args.out is None:
        print("rank needs --out DIR of a finished run", file=sys.stderr)
        return 2
    rows, timings = read_results(args.out)
    try:
        table = rank_strategies(rows, timings)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    write_csv(args.out / "rankings_timed.csv", table, RANK_FIELDS)
    _print_table(table, ("strategy", "speed_rank", "savings_perfect_rank",
                         "savings_persistence_rank", "aging_rank", "score"))
    return 0


def _cells(args):
    rows, _ = read_results(args.out)
    return [r for r in rows if r["status"] == "ok"]


def _customers_for(cfg, rows):
    from .experiment import load_customers

    recs = {r.id: r for r in load_customers(cfg)}
    missing = {r["customer"] for r in rows} - set(recs)
    if missing:
        raise SystemExit(f"customers {sorted(missing)} not found in the configured cohort")
    return recs


def cmd_degrade(args) -> int:
    if args.out is None:
        print("degrade needs --out DIR of a finished run", file=sys.stderr)
        return 2
    cfg = _load_run_config(args)
    params = C.aging_from(cfg)
    out = []
    for r in _cells(args):
        s = load_schedule(args.out / "cells" / f"{cell_key(r['customer'], r['strategy'], r['forecast'])}.npz")
        res = simulate_aging(s, battery_for_pv(float(r["pv_kwp"])), params)
        out.append({"customer": r["customer"], "strategy": r["strategy"], "forecast": r["forecast"],
                    "soh_20": res.soh_report, "ebl": res.ebl, "fec": res.fec,
                    "mean_doc": res.mean_doc})
    fields = ("customer", "strategy", "forecast", "soh_20", "ebl", "fec", "mean_doc")
    write_csv(args.out / "aging.csv", out, fields)
    print(f"aging for {len(out)} cells -> {args.out / 'aging.csv'}")
    return 0


def cmd_economics(args) -> int:
    if args.out is None:
        print("economics needs --out DIR of a finished run", file=sys.stderr)
        return 2
    cfg = _load_run_config(args)
    rows = _cells(args)
    recs = _customers_for(cfg, rows)
    tariff, params = C.tariff_from(cfg), C.cost_from(cfg)
    out = []
    for r in rows:
        s = load_schedule(args.out / "cells" / f"{cell_key(r['customer'], r['strategy'], r['forecast'])}.npz")
        rec = recs[r["customer"]]
        out.append(economics_record(rec.id, r["strategy"], r["forecast"], s, rec.demand.values,
                                    rec.pv_kwp, tariff, params))
    fields = ("customer", "strategy", "forecast", "annual_cost", "savings", "levelized_savings",
              "irr", "irr_inflated")
    write_csv(args.out / "economics.csv", out, fields)
    print(f"economics for {len(out)} cells -> {args.out / 'economics.csv'}")
    return 0


def cmd_synth(args) -> int:
    cfg = C.load_config(args.config)
    seed = args.seed if args.seed is not None else int(cfg["cohort"].get("seed", 0))
    recs = synth_cohort(args.customers, seed, cfg["cohort"].get("profile_mix"), days=args.days)
    path = args.out or Path("cohort.csv")
    write_cohort(path, recs)
    print(f"{len(recs)} customers x {args.days} days -> {path}")
    return 0


COMMANDS = {"simulate": cmd_simulate, "rank": cmd_rank, "degrade": cmd_degrade,
            "economics": cmd_economics, "synth": cmd_synth}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return COMMANDS[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
