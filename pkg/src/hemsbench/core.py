"""Shared domain types: half-hourly series, ToU tariffs, system config and schedules.

Slots are indexed 0..47 from local midnight, ``dt`` is the slot length in hours.
All powers are kW, energies kWh, tariff rates c/kWh and fixed charges $/day.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Any, Mapping, Sequence

import numpy as np

from .battery import BatterySpec, battery_for_pv

SLOTS_PER_DAY = 48
DAYS_PER_YEAR = 365
DT = 0.5

PERIODS = ("peak", "shoulder", "offpeak")

# Hours are [start, end) pairs on a 24 h clock.
DEFAULT_PERIOD_HOURS: dict[str, list[tuple[float, float]]] = {
    "peak": [(7, 9), (17, 20)],
    "shoulder": [(9, 17), (20, 22)],
    "offpeak": [(22, 24), (0, 7)],
}


def _readonly(a: Any, dtype=float) -> np.ndarray:
    arr = np.array(a, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class HalfHourSeries:
    """Half-hourly kW values covering whole days."""

    values: np.ndarray
    slots_per_day: int = SLOTS_PER_DAY
    dt: float = DT

    def __post_init__(self):
        v = _readonly(self.values)
        if v.ndim != 1:
            raise ValueError("series must be one-dimensional")
        if v.size % self.slots_per_day:
            raise ValueError(
                f"length {v.size} is not a whole number of {self.slots_per_day}-slot days"
            )
        if not np.all(np.isfinite(v)):
            raise ValueError("series contains non-finite values")
        if np.any(v < 0):
            raise ValueError("series contains negative values")
        object.__setattr__(self, "values", v)

    @property
    def days(self) -> int:
        return self.values.size // self.slots_per_day

    def __len__(self) -> int:
        return self.values.size

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)

    def day(self, d: int) -> np.ndarray:
        """Values of day ``d`` (0-based)."""
        n = self.slots_per_day
        return self.values[d * n:(d + 1) * n]

    def by_day(self) -> np.ndarray:
        return self.values.reshape(self.days, self.slots_per_day)

    def energy(self) -> float:
        return float(self.values.sum() * self.dt)


def period_map_from_hours(
    hours: Mapping[str, Sequence[Sequence[float]]], slots_per_day: int = SLOTS_PER_DAY
) -> tuple[str, ...]:
    """Translate period hour ranges into a per-slot period label.

    Raises ``ValueError`` unless every slot is covered exactly once.
    """
    slot_h = 24.0 / slots_per_day
    labels: list[str | None] = [None] * slots_per_day
    for name, ranges in hours.items():
        if name not in PERIODS:
            raise ValueError(f"unknown tariff period {name!r}")
        for start, end in ranges:
            lo, hi = round(start / slot_h), round(end / slot_h)
            for s in range(lo, hi):
                if labels[s] is not None:
                    raise ValueError(f"slot {s} assigned to both {labels[s]} and {name}")
                labels[s] = name
    missing = [s for s, lab in enumerate(labels) if lab is None]
    if missing:
        raise ValueError(f"slots {missing} not covered by any tariff period")
    return tuple(labels)  # type: ignore[arg-type]


@dataclass(frozen=True)
class TouTariff:
    """Time-of-use retail tariff with a flat feed-in rate.

    Defaults are the NSW ToU retail offer used throughout the package.
    """

    fixed_charge: float = 1.551
    peak: float = 38.588
    shoulder: float = 37.147
    offpeak: float = 21.340
    fit: float = 9.0
    period_map: tuple[str, ...] = field(
        default_factory=lambda: period_map_from_hours(DEFAULT_PERIOD_HOURS)
    )

    def __post_init__(self):
        pm = tuple(self.period_map)
        if len(pm) != SLOTS_PER_DAY or any(p not in PERIODS for p in pm):
            raise ValueError("period_map must label all 48 slots with peak/shoulder/offpeak")
        object.__setattr__(self, "period_map", pm)
        for name in ("fixed_charge", "peak", "shoulder", "offpeak", "fit"):
            if getattr(self, name) < 0:
                raise ValueError(f"tariff {name} must be non-negative")

    @property
    def rates(self) -> np.ndarray:
        """ToU import rate per slot of a day, c/kWh."""
        return np.array([getattr(self, p) for p in self.period_map])

    def rates_for(self, n_slots: int, start_slot: int = 0) -> np.ndarray:
        idx = (start_slot + np.arange(n_slots)) % SLOTS_PER_DAY
        return self.rates[idx]

    def is_offpeak(self, slot: int) -> bool:
        return self.period_map[slot % SLOTS_PER_DAY] == "offpeak"

    @classmethod
    def from_config(cls, cfg: Mapping[str, Any]) -> "TouTariff":
        """Build from the ``tariff`` section of a config mapping."""
        kw = {k: float(cfg[k]) for k in ("fixed_charge", "peak", "shoulder", "offpeak", "fit") if k in cfg}
        if "periods" in cfg:
            kw["period_map"] = period_map_from_hours(cfg["periods"])
        return cls(**kw)


def tariff_rate(tariff: TouTariff, slot: int) -> float:
    """ToU import rate (c/kWh) for a slot index in [0, 48)."""
    if not 0 <= slot < SLOTS_PER_DAY:
        raise ValueError(f"slot {slot} outside [0, {SLOTS_PER_DAY})")
    return float(getattr(tariff, tariff.period_map[slot]))


@dataclass(frozen=True)
class SystemConfig:
    """PV size, paired battery, grid connection limit and starting SOC."""

    pv_kwp: float
    battery: BatterySpec
    grid_limit: float = 20.0
    initial_soc_fraction: float = 0.5
    dt: float = DT

    def __post_init__(self):
        if not 3 <= self.pv_kwp <= 10:
            raise ValueError(f"pv_kwp {self.pv_kwp} outside the supported 3-10 kWp range")
        if self.grid_limit <= 0:
            raise ValueError("grid_limit must be positive")
        if not 0 <= self.initial_soc_fraction <= 1:
            raise ValueError("initial_soc_fraction must lie in [0, 1]")

    @classmethod
    def for_pv(cls, pv_kwp: float, **kw) -> "SystemConfig":
        return cls(pv_kwp=pv_kwp, battery=battery_for_pv(pv_kwp), **kw)

    @property
    def initial_soc(self) -> float:
        return self.initial_soc_fraction * self.battery.e_max


@dataclass(frozen=True)
class Schedule:
    """Per-slot decisions and the resulting battery energy.

    ``soc[t]`` is the stored energy at the *end* of slot ``t``; the energy at
    the start of the horizon is ``initial_soc``.
    """

    grid_import: np.ndarray
    grid_export: np.ndarray
    charge: np.ndarray
    discharge: np.ndarray
    soc: np.ndarray
    initial_soc: float
    dt: float = DT
    meta: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        names = ("grid_import", "grid_export", "charge", "discharge", "soc")
        arrays = [_readonly(getattr(self, n)) for n in names]
        n = arrays[0].size
        if any(a.shape != (n,) for a in arrays):
            raise ValueError("schedule arrays must be 1-D and of equal length")
        for name, a in zip(names, arrays):
            object.__setattr__(self, name, a)
        object.__setattr__(self, "initial_soc", float(self.initial_soc))

    def __len__(self) -> int:
        return self.grid_import.size

    @property
    def battery_on(self) -> np.ndarray:
        """Charging indicator (1 while charging), the s^b binary."""
        return (self.charge > 0).astype(int)

    @property
    def grid_dir(self) -> np.ndarray:
        """Import indicator (1 while importing), the d^g binary."""
        return (self.grid_import > 0).astype(int)

    @property
    def soc_start(self) -> np.ndarray:
        """Stored energy at the start of every slot."""
        return np.concatenate([[self.initial_soc], self.soc[:-1]])

    @property
    def final_soc(self) -> float:
        return float(self.soc[-1]) if len(self) else self.initial_soc

    @property
    def battery_power(self) -> np.ndarray:
        """Net AC battery power, positive while charging."""
        return self.charge - self.discharge

    def slice(self, start: int, stop: int) -> "Schedule":
        init = self.initial_soc if start == 0 else float(self.soc[start - 1])
        return Schedule(
            self.grid_import[start:stop], self.grid_export[start:stop],
            self.charge[start:stop], self.discharge[start:stop],
            self.soc[start:stop], init, self.dt, dict(self.meta),
        )

    def with_meta(self, **meta) -> "Schedule":
        return replace(self, meta={**self.meta, **meta})

    @classmethod
    def concat(cls, parts: Sequence["Schedule"], **meta) -> "Schedule":
        if not parts:
            raise ValueError("nothing to concatenate")
        cat = lambda name: np.concatenate([getattr(p, name) for p in parts])  # noqa: E731
        return cls(
            cat("grid_import"), cat("grid_export"), cat("charge"), cat("discharge"),
            cat("soc"), parts[0].initial_soc, parts[0].dt, meta,
        )

    @classmethod
    def idle(cls, demand, pv, initial_soc: float, dt: float = DT) -> "Schedule":
        """PV-only operation: the battery never moves."""
        net = np.asarray(demand, float) - np.asarray(pv, float)
        zeros = np.zeros_like(net)
        return cls(np.maximum(net, 0), np.maximum(-net, 0), zeros, zeros,
                   np.full_like(net, initial_soc), initial_soc, dt)


def balance_grid(demand, pv, charge, discharge) -> tuple[np.ndarray, np.ndarray]:
    """Grid import/export that closes the power balance for given battery flows."""
    net = (np.asarray(demand, float) - np.asarray(pv, float)
           + np.asarray(charge, float) - np.asarray(discharge, float))
    return np.maximum(net, 0.0), np.maximum(-net, 0.0)


@dataclass(frozen=True)
class Violation:
    slot: int
    invariant: str
    detail: str = ""

    def __str__(self) -> str:
        return f"slot {self.slot}: {self.invariant} {self.detail}".rstrip()


def validate_schedule(
    s: Schedule, demand, pv, battery: BatterySpec | None = None, *,
    atol: float = 1e-6, soc_atol: float = 1e-6,
) -> list[Violation]:
    """Check the schedule invariants slot by slot.

    Non-negativity, no simultaneous import/export or charge/discharge, and the
    power balance ``g+ - g- + pv + b- - b+ = d``. When ``battery`` is given the
    stored energy must also stay within its bounds.
    """
    d = np.asarray(demand, float)
    p = np.asarray(pv, float)
    if d.shape != (len(s),) or p.shape != (len(s),):
        raise ValueError(
            f"length mismatch: schedule {len(s)}, demand {d.size}, pv {p.size}"
        )
    out: list[Violation] = []
    flows = {"grid_import": s.grid_import, "grid_export": s.grid_export,
             "charge": s.charge, "discharge": s.discharge}
    for name, a in flows.items():
        for t in np.flatnonzero(a < -atol):
            out.append(Violation(int(t), "non-negative", f"{name}={a[t]:.6g}"))
    for t in np.flatnonzero((s.grid_import > atol) & (s.grid_export > atol)):
        out.append(Violation(int(t), "grid simultaneity",
                             f"import={s.grid_import[t]:.6g} export={s.grid_export[t]:.6g}"))
    for t in np.flatnonzero((s.charge > atol) & (s.discharge > atol)):
        out.append(Violation(int(t), "battery simultaneity",
                             f"charge={s.charge[t]:.6g} discharge={s.discharge[t]:.6g}"))
    resid = s.grid_import - s.grid_export + p + s.discharge - s.charge - d
    for t in np.flatnonzero(np.abs(resid) > atol):
        out.append(Violation(int(t), "power balance", f"residual={resid[t]:.3g} kW"))
    if battery is not None:
        bad = (s.soc < battery.e_min - soc_atol) | (s.soc > battery.e_max + soc_atol)
        for t in np.flatnonzero(bad):
            out.append(Violation(int(t), "soc bounds", f"soc={s.soc[t]:.6g} kWh"))
    out.sort(key=lambda v: v.slot)
    return out
