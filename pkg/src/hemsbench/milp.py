"""Cost-minimising battery scheduling as a mixed-integer linear program.

Per slot ``t`` the continuous variables are grid import/export, battery
charge/discharge and end-of-slot energy; the binaries are the charge
indicator ``s`` and the import indicator ``g``. The objective, in cents, is
``sum dt * (rate_t * import_t - fit * export_t)``.

Binaries are handled by best-first branch and bound on top of
:func:`hemsbench.lp.solve_lp`. The year is scheduled with a two-day rolling
horizon that keeps only the first day of each solve.
"""

from __future__ import annotations

import heapq
import itertools
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import sparse

from .battery import BatterySpec
from .core import SLOTS_PER_DAY, Schedule, SystemConfig, TouTariff, balance_grid
from .lp import LinearProgram, LpSolution, solve_lp

log = logging.getLogger(__name__)

VAR_BLOCKS = ("import", "export", "charge", "discharge", "charge_on", "import_on")


class MilpError(RuntimeError):
    """Raised when a scheduling instance is infeasible or the solver fails."""


@dataclass(frozen=True)
class MilpInstance:
    lp: LinearProgram
    n_slots: int
    binaries: np.ndarray
    demand: np.ndarray
    pv: np.ndarray
    rates: np.ndarray
    fit: float
    battery: BatterySpec
    e_init: float
    dt: float
    grid_limit: float

    def block(self, name: str) -> slice:
        """Index range of a variable block; ``"energy"`` has ``n_slots + 1`` entries."""
        n = self.n_slots
        if name == "energy":
            return slice(6 * n, 7 * n + 1)
        k = VAR_BLOCKS.index(name)
        return slice(k * n, (k + 1) * n)


def build_instance(
    demand, pv, tariff: TouTariff, cfg: SystemConfig, e_init: float, *,
    start_slot: int = 0, rates=None,
) -> MilpInstance:
    """Assemble the scheduling MILP over ``len(demand)`` slots.

    ``rates`` overrides the per-slot import prices (c/kWh); otherwise they
    follow ``tariff`` starting at ``start_slot`` of the day. The initial
    energy is a variable bounded like every other energy and pinned to
    ``e_init``, so an out-of-range start makes the program infeasible.
    """
    d = np.asarray(demand, float)
    p = np.asarray(pv, float)
    if d.shape != p.shape or d.ndim != 1:
        raise ValueError(f"forecast length mismatch: demand {d.shape}, pv {p.shape}")
    n = d.size
    r = tariff.rates_for(n, start_slot) if rates is None else np.asarray(rates, float)
    if r.shape != (n,):
        raise ValueError("rates must have one entry per slot")
    bat, dt, G = cfg.battery, cfg.dt, cfg.grid_limit
    eta, P = bat.efficiency, bat.max_power

    nv = 7 * n + 1
    gi, ge, bc, bd, sb, dg = (np.arange(k * n, (k + 1) * n) for k in range(6))
    en = np.arange(6 * n, 7 * n + 1)
    c = np.zeros(nv)
    c[gi] = dt * r
    c[ge] = -dt * tariff.fit

    rows, cols, vals = [], [], []

    def put(row, idx, v):
        rows.extend([row] * len(idx) if np.ndim(row) == 0 else row)
        cols.extend(idx)
        vals.extend(np.broadcast_to(v, len(idx)))

    t = np.arange(n)
    # power balance: import - export - charge + discharge = demand - pv
    for idx, v in ((gi, 1.0), (ge, -1.0), (bc, -1.0), (bd, 1.0)):
        put(t, idx, v)
    # energy recursion: e[t+1] - e[t] - dt*eta*charge + dt/eta*discharge = 0
    for idx, v in ((en[1:], 1.0), (en[:-1], -1.0), (bc, -dt * eta), (bd, dt / eta)):
        put(n + t, idx, v)
    put(2 * n, [en[0]], 1.0)
    A_eq = sparse.csr_matrix((vals, (rows, cols)), shape=(2 * n + 1, nv))
    b_eq = np.concatenate([d - p, np.zeros(n), [e_init]])

    rows, cols, vals = [], [], []
    put(t, bc, 1.0); put(t, sb, -P)
    put(n + t, bd, 1.0); put(n + t, sb, P)
    put(2 * n + t, gi, 1.0); put(2 * n + t, dg, -G)
    put(3 * n + t, ge, 1.0); put(3 * n + t, dg, G)
    A_ub = sparse.csr_matrix((vals, (rows, cols)), shape=(4 * n, nv))
    b_ub = np.concatenate([np.zeros(n), np.full(n, P), np.zeros(n), np.full(n, G)])

    lb = np.zeros(nv)
    ub = np.empty(nv)
    ub[gi] = ub[ge] = G
    ub[bc] = ub[bd] = P
    ub[sb] = ub[dg] = 1.0
    ub[en] = bat.e_max
    lb[en] = bat.e_min

    lp = LinearProgram(c, A_eq, b_eq, A_ub, b_ub, lb, ub)
    return MilpInstance(lp, n, np.concatenate([sb, dg]), d, p, r, tariff.fit,
                        bat, float(e_init), dt, G)


@dataclass(frozen=True)
class MilpSolution:
    schedule: Schedule
    objective: float
    bound: float
    nodes: int
    x: np.ndarray


def _repair_binaries(inst: MilpInstance, x: np.ndarray, tol: float) -> tuple[np.ndarray, np.ndarray]:
    """Integral binary values consistent with the continuous part of ``x``.

    A charge indicator may be 1 only if discharge is zero and 0 only if
    charge is zero (likewise for import/export). Returns the repaired vector
    and a mask of binaries that no integer value can satisfy.
    """
    n = inst.n_slots
    pairs = (("charge", "discharge"), ("import", "export"))
    out = x.copy()
    forced = np.zeros(2 * n, dtype=bool)
    for k, (on_name, off_name) in enumerate(pairs):
        on = x[inst.block(on_name)] > tol
        off = x[inst.block(off_name)] > tol
        idx = inst.binaries[k * n:(k + 1) * n]
        cur = np.clip(np.round(x[idx]), 0, 1)
        cur = np.where(on & ~off, 1.0, np.where(off & ~on, 0.0, cur))
        out[idx] = cur
        forced[k * n:(k + 1) * n] = on & off
    return out, forced


def branch_and_bound(inst: MilpInstance, *, gap_tol: float = 1e-6, backend: str = "simplex",
                     int_tol: float = 1e-6, max_nodes: int = 100_000) -> MilpSolution:
    """Best-first branch and bound over the charge/import binaries.

    Binaries left fractional by the relaxation are first rounded to any
    integer value the continuous solution allows; only binaries whose
    complementary flows are both positive need branching. The most
    fractional of those is branched on, ties going to the lowest slot
    (charge indicator before import indicator). Open nodes are ordered by
    LP bound, then depth. Stops once the relative gap between incumbent and
    best open bound is within ``gap_tol``.
    """
    lp = inst.lp
    bins = inst.binaries
    slot_of = np.concatenate([np.arange(inst.n_slots), np.arange(inst.n_slots)])
    kind_of = np.repeat([0, 1], inst.n_slots)

    def relax(lb, ub) -> LpSolution:
        return solve_lp(lp.with_bounds(lb, ub), backend=backend)

    root = relax(lp.lb, lp.ub)
    if root.status == "infeasible":
        raise MilpError("scheduling instance is infeasible")
    if not root.ok:
        raise MilpError(f"LP relaxation failed: {root.status} {root.message}")

    counter = itertools.count()
    heap = [(root.objective, 0, next(counter), lp.lb, lp.ub, root)]
    best_x, best_obj = None, np.inf
    nodes = 0
    bound = root.objective
    while heap:
        bound = heap[0][0]
        if best_x is not None and best_obj - bound <= gap_tol * max(1.0, abs(best_obj)):
            break
        node_bound, neg_depth, _, lb, ub, sol = heapq.heappop(heap)
        nodes += 1
        if nodes > max_nodes:
            raise MilpError(f"node limit {max_nodes} reached")
        if node_bound >= best_obj:
            continue
        x, forced = _repair_binaries(inst, sol.x, int_tol)
        if not forced.any():
            best_x, best_obj = x, sol.objective
            continue
        cand = np.flatnonzero(forced)
        xb = sol.x[bins[cand]]
        key = np.lexsort((kind_of[cand], slot_of[cand], np.abs(xb - 0.5)))
        j = bins[cand[key[0]]]
        for val in (0.0, 1.0):
            clb, cub = lb.copy(), ub.copy()
            clb[j] = cub[j] = val
            child = relax(clb, cub)
            if child.ok and child.objective < best_obj:
                heapq.heappush(heap, (child.objective, neg_depth - 1, next(counter), clb, cub, child))
    else:
        bound = best_obj
    if best_x is None:
        raise MilpError("no integer-feasible schedule found")
    bound = min(bound, best_obj)
    return MilpSolution(_to_schedule(inst, best_x), best_obj, bound, nodes, best_x)


def _to_schedule(inst: MilpInstance, x: np.ndarray) -> Schedule:
    clean = lambda v: np.where(np.abs(v) < 1e-9, 0.0, v)  # noqa: E731
    on = x[inst.block("charge_on")] > 0.5
    # integral binaries allow only one direction; drop residue of the other
    charge = np.where(on, clean(x[inst.block("charge")]), 0.0)
    discharge = np.where(on, 0.0, clean(x[inst.block("discharge")]))
    imp, exp = balance_grid(inst.demand, inst.pv, charge, discharge)
    eta, dt = inst.battery.efficiency, inst.dt
    soc = inst.e_init + np.cumsum(dt * (eta * charge - discharge / eta))
    soc = np.clip(soc, inst.battery.e_min, inst.battery.e_max)
    return Schedule(imp, exp, charge, discharge, soc, inst.e_init, dt)


def solve_milp(inst: MilpInstance, gap_tol: float = 1e-6, *, backend: str = "simplex") -> Schedule:
    """Optimal schedule for ``inst``; objective (cents) and node count in ``meta``."""
    sol = branch_and_bound(inst, gap_tol=gap_tol, backend=backend)
    return sol.schedule.with_meta(objective=sol.objective, bound=sol.bound, nodes=sol.nodes)


def schedule_cost(schedule: Schedule, rates, fit: float) -> float:
    """Energy cost of a schedule in cents, without fixed charges."""
    return float(np.sum(schedule.dt * (np.asarray(rates) * schedule.grid_import
                                       - fit * schedule.grid_export)))


def rolling_horizon(
    demand_fc, pv_fc, tariff: TouTariff, cfg: SystemConfig, *,
    demand=None, pv=None, horizon_days: int = 2, gap_tol: float = 1e-6,
    backend: str = "highs",
) -> Schedule:
    """Schedule a run of whole days with a rolling multi-day horizon.

    For each day the MILP is solved over that day and the next
    (``horizon_days`` in total, the last day repeated as padding), and only
    the first day is kept. Its final energy becomes the next day's start.

    With ``demand``/``pv`` actuals, the planned battery powers are executed
    as-is and the grid absorbs the forecast error.
    """
    dfc = np.asarray(demand_fc, float)
    pfc = np.asarray(pv_fc, float)
    if dfc.shape != pfc.shape or dfc.size % SLOTS_PER_DAY:
        raise ValueError("forecasts must cover whole days and match in length")
    d_act = dfc if demand is None else np.asarray(demand, float)
    p_act = pfc if pv is None else np.asarray(pv, float)
    if d_act.shape != dfc.shape or p_act.shape != dfc.shape:
        raise ValueError("actuals must match the forecast length")
    days = dfc.size // SLOTS_PER_DAY
    dfc_d = dfc.reshape(days, SLOTS_PER_DAY)
    pfc_d = pfc.reshape(days, SLOTS_PER_DAY)
    e = cfg.initial_soc
    parts = []
    for day in range(days):
        idx = [min(day + k, days - 1) for k in range(horizon_days)]
        inst = build_instance(dfc_d[idx].ravel(), pfc_d[idx].ravel(), tariff, cfg, e)
        try:
            plan = solve_milp(inst, gap_tol, backend=backend)
        except MilpError as exc:
            raise MilpError(f"day {day}: {exc}") from exc
        keep = plan.slice(0, SLOTS_PER_DAY)
        sl = slice(day * SLOTS_PER_DAY, (day + 1) * SLOTS_PER_DAY)
        imp, exp = balance_grid(d_act[sl], p_act[sl], keep.charge, keep.discharge)
        parts.append(Schedule(imp, exp, keep.charge, keep.discharge, keep.soc, e, cfg.dt))
        e = keep.final_soc
    return Schedule.concat(parts, strategy="milp")


def write_lp_file(inst: MilpInstance, path: str | Path) -> None:
    """Dump the instance in CPLEX LP text format for external cross-checks."""
    lp = inst.lp
    names = []
    for k, blk in enumerate(VAR_BLOCKS):
        names += [f"{blk}_{t}" for t in range(inst.n_slots)]
    names += [f"energy_{t}" for t in range(inst.n_slots + 1)]

    def expr(coefs, idx) -> str:
        terms = [f"{'+' if v >= 0 else '-'} {abs(v):.12g} {names[j]}" for j, v in zip(idx, coefs) if v != 0]
        return " ".join(terms) if terms else "0 " + names[0]

    out = ["\\ battery scheduling instance", "Minimize", " obj: " + expr(lp.c, range(lp.n)),
           "Subject To"]
    for label, A, b, sense in (("eq", lp.A_eq, lp.b_eq, "="), ("ub", lp.A_ub, lp.b_ub, "<=")):
        A = sparse.csr_matrix(A)
        for i in range(A.shape[0]):
            row = A.getrow(i)
            out.append(f" {label}{i}: {expr(row.data, row.indices)} {sense} {b[i]:.12g}")
    out.append("Bounds")
    for j in range(lp.n):
        out.append(f" {lp.lb[j]:.12g} <= {names[j]} <= {lp.ub[j]:.12g}")
    out.append("Binaries")
    out.append(" " + " ".join(names[j] for j in inst.binaries))
    out.append("End")
    Path(path).write_text("\n".join(out) + "\n")
