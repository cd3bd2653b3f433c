"""Perfect and persistence forecasts of demand and PV.

Demand persistence repeats the value observed one week earlier; during the
first week, where no history exists, the actual value is used. PV persistence
perturbs the actual value by uniform noise of at most 10 %.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import SLOTS_PER_DAY

WEEK = 7
PV_NOISE = 0.10


@dataclass(frozen=True)
class ForecastMode:
    kind: str = "perfect"
    seed: int | None = None

    def __post_init__(self):
        if self.kind not in ("perfect", "persistence"):
            raise ValueError(f"unknown forecast kind {self.kind!r}")
        if self.kind == "persistence" and self.seed is None:
            raise ValueError("persistence forecasts need a seed")


def forecast_demand(history, day: int, horizon: int = SLOTS_PER_DAY) -> np.ndarray:
    """Demand forecast for ``horizon`` slots from the start of ``day`` (0-based).

    Each slot takes the value seven days earlier; slots in the first week
    fall back to the actual value.
    """
    h = np.asarray(history, float)
    idx = day * SLOTS_PER_DAY + np.arange(horizon)
    if idx[-1] >= h.size:
        raise ValueError("forecast horizon runs past the end of the history")
    lagged = idx - WEEK * SLOTS_PER_DAY
    return np.where(lagged >= 0, h[np.maximum(lagged, 0)], h[idx])


def forecast_pv(actual, day: int, horizon: int = SLOTS_PER_DAY, seed: int = 0) -> np.ndarray:
    """PV forecast: actual plus uniform noise within +/-10 % of the actual value.

    The noise for a slot depends only on ``seed`` and the slot index, so
    overlapping horizons agree.
    """
    a = np.asarray(actual, float)
    idx = day * SLOTS_PER_DAY + np.arange(horizon)
    if idx[-1] >= a.size:
        raise ValueError("forecast horizon runs past the end of the series")
    xi = _pv_noise(a.size, seed)[idx]
    return np.maximum(a[idx] * (1.0 + xi), 0.0)


def _pv_noise(n: int, seed: int) -> np.ndarray:
    return np.random.default_rng(seed).uniform(-PV_NOISE, PV_NOISE, n)


def forecast_series(demand, pv, mode: ForecastMode) -> tuple[np.ndarray, np.ndarray]:
    """Day-ahead forecasts for every slot of a whole-day series."""
    d = np.asarray(demand, float)
    p = np.asarray(pv, float)
    if mode.kind == "perfect":
        return d.copy(), p.copy()
    days = d.size // SLOTS_PER_DAY
    d_fc = forecast_demand(d, 0, days * SLOTS_PER_DAY)
    p_fc = np.maximum(p * (1.0 + _pv_noise(p.size, mode.seed)), 0.0)
    return d_fc, p_fc
