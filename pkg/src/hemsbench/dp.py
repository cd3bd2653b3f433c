"""Deterministic dynamic programming over a discretised battery energy grid.

Each day is solved by backward induction with zero terminal value. The state
is stored energy on an evenly spaced grid, the action is a requested AC
battery power, and the transition is the (possibly nonlinear) battery model
with clamping at the energy bounds. Landing energies that fall between grid
points read the value function by linear interpolation.

The forward pass works at continuous energy: in every slot it picks the
action minimising slot cost plus interpolated future value, which is the
policy the table encodes, evaluated off-grid.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .battery import NONLINEAR, BatterySpec, EfficiencyModel, soc_step_nonlinear
from .core import SLOTS_PER_DAY, Schedule, SystemConfig, TouTariff, balance_grid


@dataclass(frozen=True)
class MdpSpec:
    n_soc: int = 101
    n_actions: int = 43

    def __post_init__(self):
        if self.n_soc < 2:
            raise ValueError("need at least two SOC levels")
        if self.n_actions < 3 or self.n_actions % 2 == 0:
            raise ValueError("n_actions must be odd and >= 3 so that zero is an action")

    def soc_grid(self, spec: BatterySpec) -> np.ndarray:
        return np.linspace(spec.e_min, spec.e_max, self.n_soc)

    def action_grid(self, spec: BatterySpec) -> np.ndarray:
        a = np.linspace(-spec.max_power, spec.max_power, self.n_actions)
        a[self.n_actions // 2] = 0.0
        return a


@dataclass(frozen=True)
class ValueTable:
    """Backward-induction result for one horizon.

    ``V[k, i]`` is the optimal cost ($) from the start of slot ``k`` at grid
    energy ``soc[i]``; ``V[K]`` is the zero terminal layer. ``policy[k, i]``
    indexes into ``actions``.
    """

    V: np.ndarray
    policy: np.ndarray
    soc: np.ndarray
    actions: np.ndarray
    demand: np.ndarray
    pv: np.ndarray
    rates: np.ndarray
    fit: float
    dt: float

    @property
    def horizon(self) -> int:
        return self.policy.shape[0]

    def value(self, k: int, e) -> np.ndarray:
        return np.interp(e, self.soc, self.V[k])


def _slot_cost(net, rate, fit, dt):
    """Slot cost in dollars for net grid draw ``net`` (kW, signed)."""
    return dt * (rate * np.maximum(net, 0.0) - fit * np.maximum(-net, 0.0)) / 100.0


def _tie_order(actions: np.ndarray) -> np.ndarray:
    # stable: smallest |p| first, charging before discharging at equal magnitude
    return np.lexsort((-actions, np.abs(actions)))


def backward_induction(demand, pv, tariff: TouTariff, spec: BatterySpec,
                       model: EfficiencyModel = NONLINEAR, mdp: MdpSpec = MdpSpec(), *,
                       dt: float = 0.5, start_slot: int = 0, rates=None) -> ValueTable:
    """Solve one horizon (normally a day) by backward induction.

    Ties between actions go to the smallest power magnitude, so a clamped
    request never beats the idle action it collapses to.
    """
    d = np.asarray(demand, float)
    p = np.asarray(pv, float)
    if d.shape != p.shape:
        raise ValueError("demand and pv must have equal length")
    K = d.size
    r = tariff.rates_for(K, start_slot) if rates is None else np.asarray(rates, float)
    grid = mdp.soc_grid(spec)
    acts = mdp.action_grid(spec)
    order = _tie_order(acts)
    acts_o = acts[order]
    # the transition does not depend on the slot, so evaluate it once
    e_next, p_del = soc_step_nonlinear(grid[:, None], acts_o[None, :], dt, spec, model)

    V = np.zeros((K + 1, grid.size))
    pol = np.zeros((K, grid.size), dtype=np.int64)
    rows = np.arange(grid.size)
    for k in range(K - 1, -1, -1):
        cost = _slot_cost(d[k] - p[k] + p_del, r[k], tariff.fit, dt)
        q = cost + np.interp(e_next, grid, V[k + 1])
        j = np.argmin(q, axis=1)
        V[k] = q[rows, j]
        pol[k] = order[j]
    return ValueTable(V, pol, grid, acts, d, p, r, float(tariff.fit), dt)


def simulate_policy(table: ValueTable, demand, pv, spec: BatterySpec, e0: float,
                    model: EfficiencyModel = NONLINEAR) -> Schedule:
    """Run the table's policy forward from energy ``e0`` on actual inputs.

    Decisions use the inputs the table was built from; the chosen power is
    then applied through the continuous transition and the grid covers
    whatever the actual demand and PV leave over.
    """
    d = np.asarray(demand, float)
    p = np.asarray(pv, float)
    K = table.horizon
    if d.shape != (K,) or p.shape != (K,):
        raise ValueError("inputs must match the table horizon")
    order = _tie_order(table.actions)
    acts_o = table.actions[order]
    dt = table.dt
    soc = np.empty(K)
    power = np.empty(K)
    e = float(e0)
    for k in range(K):
        en, pd = soc_step_nonlinear(e, acts_o, dt, spec, model)
        net = table.demand[k] - table.pv[k] + pd
        q = _slot_cost(net, table.rates[k], table.fit, dt) + table.value(k + 1, en)
        j = int(np.argmin(q))
        e, power[k] = en[j], pd[j]
        soc[k] = e
    chg, dis = np.maximum(power, 0.0), np.maximum(-power, 0.0)
    imp, exp = balance_grid(d, p, chg, dis)
    return Schedule(imp, exp, chg, dis, soc, e0, dt)


def dp_schedule(demand, pv, tariff: TouTariff, cfg: SystemConfig,
                model: EfficiencyModel = NONLINEAR, mdp: MdpSpec = MdpSpec(), *,
                demand_fc=None, pv_fc=None) -> Schedule:
    """Chain daily DP solves over whole days, carrying stored energy forward.

    Tables are built from the forecasts when given, else from the actuals.
    """
    d = np.asarray(demand, float)
    p = np.asarray(pv, float)
    dfc = d if demand_fc is None else np.asarray(demand_fc, float)
    pfc = p if pv_fc is None else np.asarray(pv_fc, float)
    if d.size % SLOTS_PER_DAY or not (d.shape == p.shape == dfc.shape == pfc.shape):
        raise ValueError("inputs must cover whole days and match in length")
    e = cfg.initial_soc
    parts = []
    for day in range(d.size // SLOTS_PER_DAY):
        sl = slice(day * SLOTS_PER_DAY, (day + 1) * SLOTS_PER_DAY)
        table = backward_induction(dfc[sl], pfc[sl], tariff, cfg.battery, model, mdp, dt=cfg.dt)
        part = simulate_policy(table, d[sl], p[sl], cfg.battery, e, model)
        parts.append(part)
        e = part.final_soc
    return Schedule.concat(parts, strategy="dp", model=model.kind)
