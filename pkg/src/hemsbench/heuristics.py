"""Rule-based strategies: self-consumption maximisation and ToU arbitrage.

All three share one slot loop. Under plain self-consumption the battery only
absorbs PV surplus and only covers PV deficit. Arbitrage slots add two rules
in off-peak periods: top the battery up from the grid to a target energy, and
never discharge below that target.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import SLOTS_PER_DAY, Schedule, SystemConfig, TouTariff

EMPTY_TOL = 1e-6  # kWh above the floor below which the battery counts as empty


@dataclass(frozen=True)
class TouaPolicy:
    """Arbitrage parameters: target as a fraction of usable capacity."""

    target: float = 0.30
    low_pv_threshold: float = 0.5

    def __post_init__(self):
        if not 0 <= self.target <= 1:
            raise ValueError("target must lie in [0, 1]")
        if self.low_pv_threshold < 0:
            raise ValueError("low_pv_threshold must be non-negative")


def _run(demand, pv, cfg: SystemConfig, arbitrage: np.ndarray, offpeak: np.ndarray,
         target: float, e0: float) -> Schedule:
    d = np.asarray(demand, float)
    p = np.asarray(pv, float)
    if d.shape != p.shape:
        raise ValueError("demand and pv must have equal length")
    bat, dt = cfg.battery, cfg.dt
    eta, P = bat.efficiency, bat.max_power
    e_floor, e_cap = bat.e_min, bat.e_max
    n = d.size
    g_in, g_out, chg, dis, soc = (np.zeros(n) for _ in range(5))
    e = e0
    for t in range(n):
        res = p[t] - d[t]
        c = x = 0.0
        toua_slot = arbitrage[t] and offpeak[t]
        if toua_slot and e < target:
            # grid top-up; any PV surplus rides along within the same limits
            want = max((target - e) / (eta * dt), res)
            c = min(P, want, (e_cap - e) / (eta * dt))
        elif res > 0:
            room = e_cap - e
            if room > 0:
                c = min(P, min(res, room / (eta * dt)))
        elif res < 0:
            floor = max(target, e_floor) if toua_slot else e_floor
            avail = e - floor
            if avail > EMPTY_TOL:
                x = min(P, min(-res, avail * eta / dt))
        net = d[t] - p[t] + c - x
        g_in[t], g_out[t] = max(net, 0.0) + 0.0, max(-net, 0.0) + 0.0
        chg[t], dis[t] = c, x
        # the clamp only absorbs rounding; the rules above already respect the bounds
        e = min(max(e + dt * (eta * c - x / eta), e_floor), e_cap)
        soc[t] = e
    return Schedule(g_in, g_out, chg, dis, soc, e0, dt)


def _offpeak_mask(n: int, tariff: TouTariff) -> np.ndarray:
    day = np.array([p == "offpeak" for p in tariff.period_map])
    return np.resize(day, n)


def scm_schedule(demand, pv, cfg: SystemConfig, *, e0: float | None = None) -> Schedule:
    """Self-consumption maximisation, starting at half the usable capacity."""
    n = np.asarray(demand).size
    e0 = cfg.initial_soc if e0 is None else e0
    zeros = np.zeros(n, dtype=bool)
    return _run(demand, pv, cfg, zeros, zeros, 0.0, e0).with_meta(strategy="scm")


def toua_schedule(demand, pv, cfg: SystemConfig, policy: TouaPolicy = TouaPolicy(),
                  tariff: TouTariff = TouTariff(), *, e0: float | None = None) -> Schedule:
    """Self-consumption plus off-peak pre-charging to ``policy.target``."""
    n = np.asarray(demand).size
    e0 = cfg.initial_soc if e0 is None else e0
    target = policy.target * cfg.battery.e_max
    return _run(demand, pv, cfg, np.ones(n, dtype=bool), _offpeak_mask(n, tariff),
                target, e0).with_meta(strategy="toua")


def low_pv_days(pv_forecast, demand_forecast, threshold: float) -> np.ndarray:
    """Days whose forecast PV energy falls below ``threshold`` x forecast demand."""
    pv_day = np.asarray(pv_forecast, float).reshape(-1, SLOTS_PER_DAY).sum(axis=1)
    d_day = np.asarray(demand_forecast, float).reshape(-1, SLOTS_PER_DAY).sum(axis=1)
    return pv_day < threshold * d_day


def scm_toua_schedule(demand, pv, pv_forecast, cfg: SystemConfig,
                      policy: TouaPolicy = TouaPolicy(), tariff: TouTariff = TouTariff(), *,
                      demand_forecast=None, e0: float | None = None) -> Schedule:
    """Self-consumption, switching to arbitrage on forecast low-PV days.

    A day runs arbitrage rules when its forecast PV energy is below
    ``policy.low_pv_threshold`` times its forecast demand energy.
    """
    n = np.asarray(demand).size
    e0 = cfg.initial_soc if e0 is None else e0
    d_fc = demand if demand_forecast is None else demand_forecast
    days = low_pv_days(pv_forecast, d_fc, policy.low_pv_threshold)
    mask = np.repeat(days, SLOTS_PER_DAY)
    target = policy.target * cfg.battery.e_max
    s = _run(demand, pv, cfg, mask, _offpeak_mask(n, tariff), target, e0)
    return s.with_meta(strategy="scm_toua", toua_days=int(days.sum()))
