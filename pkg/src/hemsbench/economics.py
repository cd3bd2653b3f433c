"""Annual electricity cost, savings, levelised savings and IRR.

Money is in dollars here; tariff rates are c/kWh and converted on the way in.
Export revenue is already netted inside :func:`annual_cost`, so the separate
feed-in term of the cash inflow is zero by default and the gross export
revenue is carried on the ledger for reporting only.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any

import numpy as np
from scipy.optimize import bisect

from .core import SLOTS_PER_DAY, TouTariff

# Installed PV-battery system price in $ by PV size (kWp).
SYSTEM_PRICE = {3: 11_000.0, 4: 11_900.0, 5: 14_900.0, 6: 16_300.0,
                7: 18_300.0, 8: 19_700.0, 9: 21_100.0, 10: 22_500.0}


def system_price(pv_kwp: float) -> float:
    """Initial investment for the PV size, with the battery it is paired with."""
    key = int(round(pv_kwp))
    if key not in SYSTEM_PRICE or abs(pv_kwp - key) > 1e-9:
        raise ValueError(f"no market price for a {pv_kwp} kWp system")
    return SYSTEM_PRICE[key]


@dataclass(frozen=True)
class CostParams:
    inflation: float = 0.03
    discount: float = 0.05
    lifespan: int = 20
    c0: float | None = None

    def __post_init__(self):
        if self.lifespan < 1:
            raise ValueError("lifespan must be at least one year")
        if self.c0 is not None and self.c0 <= 0:
            raise ValueError("initial cost must be positive")

    @property
    def real_discount(self) -> float:
        """Inflation-adjusted discount rate ``(d - e) / (1 + e)``."""
        return (self.discount - self.inflation) / (1.0 + self.inflation)

    def initial_cost(self, pv_kwp: float | None = None) -> float:
        if self.c0 is not None:
            return self.c0
        if pv_kwp is None:
            raise ValueError("need either c0 or a PV size")
        return system_price(pv_kwp)


def _annuity(rate: float, n: int) -> float:
    """Present value of 1 per year for ``n`` years at ``rate``."""
    g = (1.0 + rate) ** n
    return (g - 1.0) / (rate * g)


def levelising_factor(params: CostParams) -> float:
    dp = params.real_discount
    if dp <= 0:
        raise ValueError("real discount rate must be positive (need discount > inflation)")
    return _annuity(dp, params.lifespan) / _annuity(params.discount, params.lifespan)


def levelized_savings(c_n: float, params: CostParams = CostParams()) -> float:
    """Constant annuity equivalent to savings ``c_n`` that grow with inflation."""
    return levelising_factor(params) * c_n


def _energy_cost_cents(grid_import, grid_export, rates, fit, dt) -> float:
    return float(dt * (np.dot(rates, grid_import) - fit * np.sum(grid_export)))


def annual_cost(schedule, tariff: TouTariff = TouTariff()) -> float:
    """Electricity bill in $ for a whole-day schedule, fixed charges included."""
    n = len(schedule)
    if n % SLOTS_PER_DAY:
        raise ValueError("schedule must cover whole days")
    cents = _energy_cost_cents(schedule.grid_import, schedule.grid_export,
                               tariff.rates_for(n), tariff.fit, schedule.dt)
    return cents / 100.0 + (n // SLOTS_PER_DAY) * tariff.fixed_charge


def baseline_cost(demand, tariff: TouTariff = TouTariff(), dt: float = 0.5) -> float:
    """Bill in $ with neither PV nor battery: all demand imported."""
    d = np.asarray(demand, float)
    if d.size % SLOTS_PER_DAY:
        raise ValueError("demand must cover whole days")
    cents = dt * np.dot(tariff.rates_for(d.size), d)
    return float(cents) / 100.0 + (d.size // SLOTS_PER_DAY) * tariff.fixed_charge


@dataclass(frozen=True)
class CashflowLedger:
    c_e: float  # bill without PV-battery
    c_e_der: float  # bill with PV-battery
    s_fit: float = 0.0  # feed-in term of the cash inflow (0: already netted)
    fit_revenue: float = 0.0  # gross export revenue, reporting only
    levelising: float = 1.0

    @property
    def s_e(self) -> float:
        return self.c_e - self.c_e_der

    @property
    def c_n(self) -> float:
        return self.s_e + self.s_fit

    @property
    def c_n_levelized(self) -> float:
        return self.levelising * self.c_n


@dataclass(frozen=True)
class IrrResult:
    r: float
    r_inflated: float
    npv_residual: float
    ok: bool = True
    message: str = ""


def npv(rate: float, c0: float, c_n, n_years: int) -> float:
    flows = np.broadcast_to(np.asarray(c_n, float), (n_years,))
    disc = (1.0 + rate) ** -np.arange(1, n_years + 1)
    return float(-c0 + np.dot(flows, disc))


def irr(c0: float, c_n: float, n_years: int, inflation: float = 0.03, *,
        lo: float = -0.99, hi: float = 10.0, tol: float = 1e-6) -> IrrResult:
    """Internal rate of return of ``-c0`` now and ``c_n`` at years 1..N.

    Found by bisection on ``[lo, hi]``. ``r_inflated = r (1 + e) + e``. When
    the NPV does not change sign over the bracket the result has ``ok=False``
    and NaN rates.
    """
    f = lambda r: npv(r, c0, c_n, n_years)  # noqa: E731
    f_lo, f_hi = f(lo), f(hi)
    if not np.isfinite(f_lo) or f_lo * f_hi > 0:
        return IrrResult(np.nan, np.nan, np.nan, False, "no sign change of NPV in the bracket")
    r = bisect(f, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=400)
    res = f(r)
    if abs(res) >= tol:
        return IrrResult(r, r * (1 + inflation) + inflation, res, False,
                         f"NPV residual {res:.3g} above tolerance")
    return IrrResult(r, r * (1 + inflation) + inflation, res)


def cashflow_ledger(schedule, demand, tariff: TouTariff = TouTariff(),
                    params: CostParams = CostParams()) -> CashflowLedger:
    fit_rev = float(schedule.dt * tariff.fit * np.sum(schedule.grid_export)) / 100.0
    return CashflowLedger(
        c_e=baseline_cost(demand, tariff, schedule.dt),
        c_e_der=annual_cost(schedule, tariff),
        fit_revenue=fit_rev,
        levelising=levelising_factor(params),
    )


def economics_record(customer: str, strategy: str, forecast: str, schedule, demand,
                     pv_kwp: float, tariff: TouTariff = TouTariff(),
                     params: CostParams = CostParams()) -> dict[str, Any]:
    """Per-customer result row for one strategy and forecast mode."""
    led = cashflow_ledger(schedule, demand, tariff, params)
    c0 = params.initial_cost(pv_kwp)
    res = irr(c0, led.c_n, params.lifespan, params.inflation)
    res_lev = irr(c0, led.c_n_levelized, params.lifespan, params.inflation)
    return {
        "customer": customer,
        "strategy": strategy,
        "forecast": forecast,
        "annual_cost": led.c_e_der,
        "baseline_cost": led.c_e,
        "savings": led.s_e,
        "fit_revenue": led.fit_revenue,
        "levelized_savings": led.c_n_levelized,
        "irr": res.r,
        "irr_inflated": res.r_inflated,
        "irr_levelized": res_lev.r,
    }
