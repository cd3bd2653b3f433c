"""Battery and inverter operating models.

Energy ``e`` is counted inside the usable window, so ``e_min = 0`` and
``e_max = usable_kwh``. Battery power is the AC-side power at the battery
inverter, positive while charging.

The linear model applies one constant one-way efficiency in both directions.
The nonlinear model multiplies a battery efficiency (function of C-rate and
SOC) with an inverter efficiency (function of the fraction of rated power).
Its default curves are engineering stand-ins, not measured data.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np


@dataclass(frozen=True)
class BatterySpec:
    name: str
    nominal_kwh: float
    usable_kwh: float
    max_power: float
    efficiency: float = 0.91

    def __post_init__(self):
        if not 0 < self.usable_kwh <= self.nominal_kwh:
            raise ValueError("usable capacity must be positive and at most nominal")
        if not 0 < self.efficiency <= 1:
            raise ValueError("efficiency must lie in (0, 1]")
        if self.max_power <= 0:
            raise ValueError("max_power must be positive")

    @property
    def e_min(self) -> float:
        return 0.0

    @property
    def e_max(self) -> float:
        return self.usable_kwh

    @property
    def reserve_kwh(self) -> float:
        """Energy held below the usable window (nominal minus usable)."""
        return self.nominal_kwh - self.usable_kwh

    def soc_fraction(self, e) -> np.ndarray:
        """Stored energy as a fraction of nominal capacity."""
        return (np.asarray(e, float) + self.reserve_kwh) / self.nominal_kwh


RESU_6_5 = BatterySpec("LG Chem RESU 6.5", 6.5, 5.9, 4.2)
RESU_10 = BatterySpec("LG Chem RESU 10", 9.8, 8.8, 5.0)
POWERWALL_2 = BatterySpec("Tesla Powerwall 2", 14.0, 13.5, 5.0)

# (max PV kWp, battery) pairs, checked in order.
PV_BATTERY_PAIRING: tuple[tuple[float, BatterySpec], ...] = (
    (4.5, RESU_6_5),
    (6.5, RESU_10),
    (10.0, POWERWALL_2),
)


def battery_for_pv(pv_kwp: float) -> BatterySpec:
    """Battery paired with a PV size: 3-4 kWp, 5-6 kWp and 7-10 kWp bands."""
    if not 3 <= pv_kwp <= 10:
        raise ValueError(f"no battery pairing for {pv_kwp} kWp")
    for limit, spec in PV_BATTERY_PAIRING:
        if pv_kwp <= limit:
            return spec
    raise AssertionError("unreachable")


def _curve(points: Sequence[Sequence[float]], name: str) -> tuple[tuple[float, float], ...]:
    pts = tuple((float(x), float(y)) for x, y in points)
    if not pts:
        raise ValueError(f"{name} curve is empty")
    xs = [x for x, _ in pts]
    if any(b <= a for a, b in zip(xs, xs[1:])):
        raise ValueError(f"{name} curve abscissae must be strictly increasing")
    if any(not 0 < y <= 1 for _, y in pts):
        raise ValueError(f"{name} curve efficiencies must lie in (0, 1]")
    return pts


DEFAULT_INVERTER_CURVE = ((0.05, 0.85), (0.40, 0.97), (1.0, 0.97))
DEFAULT_BATTERY_CURVE = ((0.1, 0.95), (1.0, 0.89))
DEFAULT_SOC_CURVE = ((0.0, 1.0), (1.0, 1.0))


@dataclass(frozen=True)
class EfficiencyModel:
    """Constant or curve-based charge/discharge efficiency.

    ``battery_curve`` maps C-rate (|p| / nominal kWh) to one-way cell
    efficiency, ``soc_curve`` maps SOC fraction to a multiplier on it and
    ``inverter_curve`` maps |p| / max_power to inverter efficiency. Curves are
    interpolated piecewise-linearly and held flat outside their range.
    """

    kind: str = "nonlinear"
    battery_curve: tuple = DEFAULT_BATTERY_CURVE
    inverter_curve: tuple = DEFAULT_INVERTER_CURVE
    soc_curve: tuple = DEFAULT_SOC_CURVE

    def __post_init__(self):
        if self.kind not in ("linear", "nonlinear"):
            raise ValueError(f"unknown efficiency model kind {self.kind!r}")
        for name in ("battery_curve", "inverter_curve", "soc_curve"):
            object.__setattr__(self, name, _curve(getattr(self, name), name))

    @classmethod
    def linear(cls) -> "EfficiencyModel":
        return cls(kind="linear")

    @classmethod
    def from_config(cls, cfg: Mapping[str, Any]) -> "EfficiencyModel":
        curves = cfg.get("curves", {})
        kw: dict[str, Any] = {"kind": cfg.get("model", "nonlinear")}
        for key, name in (("battery", "battery_curve"), ("inverter", "inverter_curve"),
                          ("soc", "soc_curve")):
            if key in curves:
                kw[name] = curves[key]
        return cls(**kw)

    def efficiency(self, p_abs, e, spec: BatterySpec) -> np.ndarray:
        """One-way efficiency at AC power magnitude ``p_abs`` and energy ``e``."""
        p_abs = np.asarray(p_abs, float)
        if self.kind == "linear":
            return np.full(np.broadcast(p_abs, np.asarray(e)).shape, spec.efficiency)
        interp = lambda pts, x: np.interp(x, [a for a, _ in pts], [b for _, b in pts])  # noqa: E731
        cell = interp(self.battery_curve, p_abs / spec.nominal_kwh)
        soc = interp(self.soc_curve, np.asarray(e, float) / spec.e_max)
        inv = interp(self.inverter_curve, p_abs / spec.max_power)
        return cell * soc * inv


LINEAR = EfficiencyModel.linear()
NONLINEAR = EfficiencyModel()


def soc_step_linear(e, p_chg, p_dis, dt: float, spec: BatterySpec):
    """Linear SOC update ``e + dt (eta p_chg - p_dis / eta)``, unclamped."""
    p_chg = np.asarray(p_chg, float)
    p_dis = np.asarray(p_dis, float)
    if np.any(p_chg < 0) or np.any(p_dis < 0):
        raise ValueError("charge and discharge powers must be non-negative")
    if np.any((p_chg > 0) & (p_dis > 0)):
        raise ValueError("simultaneous charge and discharge")
    eta = spec.efficiency
    out = np.asarray(e, float) + dt * (eta * p_chg - p_dis / eta)
    return float(out) if out.ndim == 0 else out


def energy_delta(p, e, dt: float, spec: BatterySpec, model: EfficiencyModel) -> np.ndarray:
    """Change in stored energy over one slot for signed AC power ``p``."""
    p = np.asarray(p, float)
    eta = model.efficiency(np.abs(p), e, spec)
    return dt * np.where(p >= 0, eta * p, p / eta)


def soc_step_nonlinear(e, p_req, dt: float, spec: BatterySpec,
                       model: EfficiencyModel = NONLINEAR, *, iters: int = 200):
    """Advance stored energy one slot under ``model``, reducing power if needed.

    If the requested power would end the slot outside ``[e_min, e_max]`` the
    power is scaled down for the whole slot until the bound is met exactly.
    Works elementwise on arrays. Returns ``(e_next, p_delivered)``.
    """
    e = np.asarray(e, float)
    p_req = np.clip(np.asarray(p_req, float), -spec.max_power, spec.max_power)
    e, p_req = np.broadcast_arrays(e, p_req)
    e_next = np.array(e + energy_delta(p_req, e, dt, spec, model), dtype=float)
    over = e_next > spec.e_max
    under = e_next < spec.e_min
    bad = over | under
    p_out = p_req.copy()
    if np.any(bad):
        target = np.where(over, spec.e_max, spec.e_min)[bad]
        eb, pb = e[bad], p_req[bad]
        # |energy_delta| is monotone in |p| for both directions, so the scale
        # factor has a unique root; Illinois false position keeps a bracket
        # whose lower end always stays feasible.
        sign = np.sign(pb)
        g = lambda s: (eb + energy_delta(s * pb, eb, dt, spec, model) - target) * sign  # noqa: E731
        lo, hi = np.zeros_like(pb), np.ones_like(pb)
        g_lo, g_hi = g(lo), g(hi)
        side = np.zeros_like(pb)
        for _ in range(iters):
            done = (hi - lo < 1e-14) | (g_lo > -1e-13)
            if np.all(done):
                break
            denom = g_hi - g_lo
            c = np.where(denom > 0, (lo * g_hi - hi * g_lo) / np.where(denom > 0, denom, 1.0),
                         0.5 * (lo + hi))
            c = np.clip(c, lo, hi)
            gc = g(c)
            left = (gc <= 0) & ~done
            right = (gc > 0) & ~done
            g_hi = np.where(left & (side == -1), 0.5 * g_hi, g_hi)
            g_lo = np.where(right & (side == 1), 0.5 * g_lo, g_lo)
            lo, g_lo = np.where(left, c, lo), np.where(left, gc, g_lo)
            hi, g_hi = np.where(right, c, hi), np.where(right, gc, g_hi)
            side = np.where(left, -1.0, np.where(right, 1.0, side))
        p_out[bad] = lo * pb
        e_next[bad] = target
    if e_next.ndim == 0:
        return float(e_next), float(p_out)
    return e_next, p_out


def clamp_power(e: float, p_req: float, dt: float, spec: BatterySpec) -> float:
    """Largest feasible power with the sign of ``p_req`` under the linear model."""
    eta = spec.efficiency
    if p_req > 0:
        room = max(spec.e_max - e, 0.0) / (eta * dt)
        return float(min(p_req, spec.max_power, room))
    if p_req < 0:
        avail = max(e - spec.e_min, 0.0) * eta / dt
        return -float(min(-p_req, spec.max_power, avail))
    return 0.0


@dataclass(frozen=True)
class ReplayViolation:
    slot: int
    soc: float
    bound: str


@dataclass(frozen=True)
class Replay:
    soc: np.ndarray
    violations: list[ReplayViolation] = field(default_factory=list)


def replay_schedule(schedule, spec: BatterySpec, model: EfficiencyModel = NONLINEAR,
                    *, tol: float = 1e-9) -> Replay:
    """Re-run a schedule's battery powers through ``model`` without clamping.

    Every slot whose end-of-slot energy leaves ``[e_min, e_max]`` is reported.
    """
    p = schedule.charge - schedule.discharge
    traj = np.empty(p.size)
    e = schedule.initial_soc
    violations = []
    for t, pt in enumerate(p):
        if model.kind == "linear":
            e = soc_step_linear(e, max(pt, 0.0), max(-pt, 0.0), schedule.dt, spec)
        else:
            e = e + float(energy_delta(pt, e, schedule.dt, spec, model))
        traj[t] = e
        if e > spec.e_max + tol:
            violations.append(ReplayViolation(t, e, "max"))
        elif e < spec.e_min - tol:
            violations.append(ReplayViolation(t, e, "min"))
    return Replay(traj, violations)
