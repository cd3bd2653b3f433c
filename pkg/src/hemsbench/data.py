"""Smart-meter cohort ingestion and a synthetic cohort generator.

CSV files use a long layout, one row per customer and half-hour::

    customer_id,date,slot,demand_kw,pv_kw[,pv_kwp]

``slot`` runs 0..47 from midnight. The optional ``pv_kwp`` column carries the
installed PV size; without it the size is taken from ``pv_sizes`` or, as a
last resort, from the peak PV output rounded to whole kWp. A wide
one-column-per-half-hour file converts to this layout by melting the 48
columns into ``slot``.

The synthetic generator draws demand from the five generic daily load shapes
with seasonal and random variation, and PV from a clear-sky half-sine with a
seasonal day length and daily cloudiness. None of it is fitted to measured
data.
"""

from __future__ import annotations

import csv
import datetime as dt_
import logging
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .battery import BatterySpec, battery_for_pv
from .core import DAYS_PER_YEAR, SLOTS_PER_DAY, HalfHourSeries, SystemConfig

log = logging.getLogger(__name__)

PROFILE_NAMES = ("Double Peak", "Evening peak", "High Day and Evening Peak",
                 "Day focus", "Night focus")

# PV size shares of the reference cohort: 3, 4, 5, 6 and 7-10 kWp.
DEFAULT_PV_MIX = {3.0: 5, 4.0: 15, 5.0: 20, 6.0: 4, 7.0: 2, 8.0: 2, 9.0: 2, 10.0: 2}

CSV_FIELDS = ("customer_id", "date", "slot", "demand_kw", "pv_kw", "pv_kwp")
START_DATE = dt_.date(2012, 7, 1)


class CohortFormatError(ValueError):
    """Malformed rows in a cohort file; ``lines`` lists the offending line numbers."""

    def __init__(self, problems: list[tuple[int, str]]):
        self.lines = [ln for ln, _ in problems]
        shown = "; ".join(f"line {ln}: {msg}" for ln, msg in problems[:10])
        more = f" (+{len(problems) - 10} more)" if len(problems) > 10 else ""
        super().__init__(f"malformed cohort rows: {shown}{more}")


@dataclass(frozen=True)
class CustomerRecord:
    id: str
    pv_kwp: float
    demand: HalfHourSeries
    pv: HalfHourSeries
    profile: str | None = None  # generic shape the customer was drawn from, if known

    def __post_init__(self):
        if not 3 <= self.pv_kwp <= 10:
            raise ValueError(f"customer {self.id}: pv_kwp {self.pv_kwp} outside 3-10")
        if len(self.demand) != len(self.pv):
            raise ValueError(f"customer {self.id}: demand and pv lengths differ")

    @property
    def battery(self) -> BatterySpec:
        return battery_for_pv(self.pv_kwp)

    @property
    def days(self) -> int:
        return self.demand.days

    def system(self, **kw) -> SystemConfig:
        return SystemConfig.for_pv(self.pv_kwp, **kw)

    def head(self, days: int) -> "CustomerRecord":
        """The same customer truncated to its first ``days`` days."""
        n = days * SLOTS_PER_DAY
        return CustomerRecord(self.id, self.pv_kwp, HalfHourSeries(self.demand.values[:n]),
                              HalfHourSeries(self.pv.values[:n]), self.profile)


# ---------------------------------------------------------------- profiles

def _bump(hours: np.ndarray, centre: float, width: float) -> np.ndarray:
    # circular distance so that night bumps wrap around midnight
    d = np.abs(hours - centre)
    d = np.minimum(d, 24.0 - d)
    return np.exp(-0.5 * (d / width) ** 2)


def bump_profiles() -> np.ndarray:
    """The generic shapes as Gaussian-bump mixtures, 48 x 5, columns sum to 1."""
    h = (np.arange(SLOTS_PER_DAY) + 0.5) / 2.0
    shapes = [
        0.25 + 1.0 * _bump(h, 7.5, 1.2) + 1.2 * _bump(h, 19.0, 1.8),
        0.25 + 1.6 * _bump(h, 19.0, 1.6),
        0.25 + 0.9 * _bump(h, 13.0, 3.0) + 1.2 * _bump(h, 19.0, 1.6),
        0.20 + 1.2 * _bump(h, 12.5, 3.0),
        0.30 + 1.2 * _bump(h, 0.5, 2.5),
    ]
    m = np.column_stack(shapes)
    return m / m.sum(axis=0)


def load_profiles(path: str | Path | None = None) -> np.ndarray:
    """Generic daily load shapes (48 x 5), columns in :data:`PROFILE_NAMES` order.

    Each column is normalised to unit sum. The default file ships with the
    package; pass ``path`` to override.
    """
    if path is None:
        text = resources.files("hemsbench.resources").joinpath("profiles.csv").read_text("utf-8")
        rows = list(csv.reader(text.splitlines()))
    else:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    if len(body) != SLOTS_PER_DAY or len(header) != len(PROFILE_NAMES):
        raise ValueError("profile file must hold 48 rows x 5 named columns")
    m = np.array([[float(x) for x in r] for r in body])
    if np.any(m < 0) or np.any(m.sum(axis=0) <= 0):
        raise ValueError("profiles must be non-negative with positive energy")
    order = [header.index(name) for name in PROFILE_NAMES]
    m = m[:, order]
    return m / m.sum(axis=0)


def write_profiles(path: str | Path, profiles: np.ndarray | None = None) -> None:
    m = bump_profiles() if profiles is None else np.asarray(profiles, float)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PROFILE_NAMES)
        for row in m:
            w.writerow([f"{x:.10f}" for x in row])


# ---------------------------------------------------------------- CSV I/O

def _infer_pv_kwp(pv: np.ndarray) -> float:
    return float(np.clip(round(float(pv.max())), 3, 10))


def load_cohort(path: str | Path, pv_sizes: Mapping[str, float] | None = None, *,
                rejected: dict[str, str] | None = None) -> list[CustomerRecord]:
    """Read a long-format cohort CSV.

    Rows that do not parse raise :class:`CohortFormatError` listing every bad
    line. A customer whose dates have gaps or whose slots are incomplete is
    left out with reason ``"incomplete series"``; reasons are written into
    ``rejected`` when a dict is supplied.
    """
    rows: dict[str, dict[dt_.date, dict[int, tuple[float, float]]]] = {}
    sizes: dict[str, float] = dict(pv_sizes or {})
    problems: list[tuple[int, str]] = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CohortFormatError([(1, "missing header row")]) from None
        need = CSV_FIELDS[:5]
        missing = [c for c in need if c not in header]
        if missing:
            raise CohortFormatError([(1, f"header lacks {', '.join(missing)}")])
        col = {name: header.index(name) for name in header}
        for ln, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                if len(row) != len(header):
                    raise ValueError(f"expected {len(header)} fields, got {len(row)}")
                cid = row[col["customer_id"]].strip()
                if not cid:
                    raise ValueError("empty customer_id")
                day = dt_.date.fromisoformat(row[col["date"]].strip())
                slot = int(row[col["slot"]])
                if not 0 <= slot < SLOTS_PER_DAY:
                    raise ValueError(f"slot {slot} outside 0-47")
                dem, pv = float(row[col["demand_kw"]]), float(row[col["pv_kw"]])
                if not (np.isfinite(dem) and np.isfinite(pv)) or dem < 0 or pv < 0:
                    raise ValueError("power values must be finite and non-negative")
                if "pv_kwp" in col and row[col["pv_kwp"]].strip():
                    sizes.setdefault(cid, float(row[col["pv_kwp"]]))
            except ValueError as exc:
                problems.append((ln, str(exc)))
                continue
            rows.setdefault(cid, {}).setdefault(day, {})[slot] = (dem, pv)
    if problems:
        raise CohortFormatError(problems)

    out = []
    for cid in sorted(rows):
        days = rows[cid]
        first, last = min(days), max(days)
        n_days = (last - first).days + 1
        complete = len(days) == n_days and all(len(v) == SLOTS_PER_DAY for v in days.values())
        if not complete:
            log.warning("customer %s rejected: incomplete series", cid)
            if rejected is not None:
                rejected[cid] = "incomplete series"
            continue
        vals = np.array([days[first + dt_.timedelta(days=k)][s]
                         for k in range(n_days) for s in range(SLOTS_PER_DAY)])
        kwp = sizes.get(cid, _infer_pv_kwp(vals[:, 1]))
        try:
            out.append(CustomerRecord(cid, kwp, HalfHourSeries(vals[:, 0]), HalfHourSeries(vals[:, 1])))
        except ValueError as exc:
            if rejected is not None:
                rejected[cid] = str(exc)
            log.warning("customer %s rejected: %s", cid, exc)
    return out


def write_cohort(path: str | Path, cohort: Iterable[CustomerRecord],
                 start: dt_.date = START_DATE) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_FIELDS)
        for rec in cohort:
            dem, pv = rec.demand.values, rec.pv.values
            for i in range(len(dem)):
                day = start + dt_.timedelta(days=i // SLOTS_PER_DAY)
                w.writerow([rec.id, day.isoformat(), i % SLOTS_PER_DAY,
                            f"{dem[i]:.4f}", f"{pv[i]:.4f}", f"{rec.pv_kwp:g}"])


# ---------------------------------------------------------------- synthesis

def _allocate(n: int, weights: Sequence[float]) -> np.ndarray:
    """Largest-remainder split of ``n`` items by ``weights``."""
    w = np.asarray(weights, float)
    quota = n * w / w.sum()
    counts = np.floor(quota).astype(int)
    rest = n - counts.sum()
    counts[np.argsort(-(quota - counts), kind="stable")[:rest]] += 1
    return counts


def synth_pv(pv_kwp: float, days: int, rng: np.random.Generator,
             start: dt_.date = START_DATE) -> np.ndarray:
    """Half-hourly PV output (kW): seasonal half-sine days with random cloud cover."""
    doy = np.array([(start + dt_.timedelta(days=k)).timetuple().tm_yday for k in range(days)])
    # southern hemisphere: longest day near 21 December (doy 355)
    season = np.cos(2 * np.pi * (doy - 355) / 365.0)
    day_len = 12.2 + 2.2 * season
    amp = 0.80 + 0.15 * season
    sunrise, sunset = 12.0 - day_len / 2, 12.0 + day_len / 2
    clear = rng.beta(5.0, 1.6, days)
    h = (np.arange(SLOTS_PER_DAY) + 0.5) / 2.0
    x = (h[None, :] - sunrise[:, None]) / day_len[:, None]
    shape = np.where((x > 0) & (x < 1), np.sin(np.pi * np.clip(x, 0, 1)), 0.0)
    flicker = np.clip(1.0 + 0.08 * rng.standard_normal((days, SLOTS_PER_DAY)), 0.6, 1.2)
    pv = pv_kwp * amp[:, None] * clear[:, None] * shape * flicker
    return np.clip(pv, 0.0, pv_kwp).ravel()


def synth_demand(profile: np.ndarray, daily_kwh: float, days: int, rng: np.random.Generator,
                 start: dt_.date = START_DATE) -> np.ndarray:
    """Half-hourly demand (kW) following one generic shape with noise."""
    doy = np.array([(start + dt_.timedelta(days=k)).timetuple().tm_yday for k in range(days)])
    weekday = np.array([(start + dt_.timedelta(days=k)).weekday() for k in range(days)])
    # winter-heavy seasonal swing (winter solstice near doy 172)
    season = 1.0 + 0.18 * np.cos(2 * np.pi * (doy - 172) / 365.0)
    weekend = np.where(weekday >= 5, 1.08, 1.0)
    energy = daily_kwh * season * weekend * rng.lognormal(0.0, 0.12, days)
    slot_noise = rng.lognormal(0.0, 0.25, (days, SLOTS_PER_DAY))
    shape = profile[None, :] * slot_noise
    shape /= shape.sum(axis=1, keepdims=True)
    return (energy[:, None] * shape / 0.5).ravel()


def synth_cohort(n: int, seed: int = 0, profile_mix: Sequence[float] | None = None, *,
                 days: int = DAYS_PER_YEAR, pv_mix: Mapping[float, float] | None = None,
                 profiles: np.ndarray | None = None) -> list[CustomerRecord]:
    """Generate ``n`` synthetic customers, deterministic in ``seed``.

    ``profile_mix`` weights the five generic shapes (equal by default); the
    counts are split by largest remainder, so a 20 % share of 50 customers
    gives exactly 10. PV sizes are drawn from ``pv_mix``.
    """
    if n < 1:
        raise ValueError("need at least one customer")
    prof = load_profiles() if profiles is None else np.asarray(profiles, float)
    mix = np.ones(len(PROFILE_NAMES)) if profile_mix is None else np.asarray(profile_mix, float)
    if mix.size != len(PROFILE_NAMES) or np.any(mix < 0) or mix.sum() <= 0:
        raise ValueError("profile_mix needs five non-negative weights")
    counts = _allocate(n, mix)
    kinds = np.repeat(np.arange(len(PROFILE_NAMES)), counts)
    pvm = DEFAULT_PV_MIX if pv_mix is None else pv_mix
    sizes = np.array(sorted(pvm))
    probs = np.array([pvm[s] for s in sizes], float)
    probs /= probs.sum()

    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    out = []
    for i in range(n):
        crng = np.random.default_rng([seed, i])
        kind = int(kinds[order[i]])
        kwp = float(crng.choice(sizes, p=probs))
        daily = crng.uniform(10.0, 22.0)
        dem = synth_demand(prof[:, kind], daily, days, crng)
        pv = synth_pv(kwp, days, crng)
        out.append(CustomerRecord(f"c{i:03d}", kwp, HalfHourSeries(dem), HalfHourSeries(pv),
                                  PROFILE_NAMES[kind]))
    return out
