from __future__ import annotations

import itertools

import numpy as np
import pytest

from conftest import days_of
from hemsbench.battery import BatterySpec
from hemsbench.core import SystemConfig, TouTariff, validate_schedule
from hemsbench.heuristics import scm_schedule, toua_schedule
from hemsbench.lp import solve_lp
from hemsbench.milp import (MilpError, build_instance, rolling_horizon, schedule_cost, solve_milp,
                            write_lp_file)

TARIFF = TouTariff()
TOY = SystemConfig(3.0, BatterySpec("toy", 2.0, 2.0, 4.2))
OFFPEAK_THEN_PEAK = 13  # 06:30 is off-peak, 07:00 is peak


def toy_instance():
    return build_instance([0.0, 2.0], [0.0, 0.0], TARIFF, TOY, 0.0, start_slot=OFFPEAK_THEN_PEAK)


def test_toy_rates():
    np.testing.assert_allclose(TARIFF.rates_for(2, OFFPEAK_THEN_PEAK), [21.340, 38.588])


def test_toy_grid_search_oracle():
    # charge level c off-peak, then cover as much of the 2 kW peak as the stored energy allows
    c = np.linspace(0, 4.2, 420001)
    stored = 0.5 * 0.91 * c
    dis = np.minimum(2.0, stored * 0.91 / 0.5)
    cost = 0.5 * (21.340 * c + 38.588 * (2.0 - dis))
    k = np.argmin(cost)
    assert cost[k] == pytest.approx(25.77, abs=0.01)
    assert c[k] == pytest.approx(2.0 / 0.91**2, abs=1e-4)  # 2.4152 kW


def test_toy_milp_objective():
    s = solve_milp(toy_instance())
    assert s.meta["objective"] == pytest.approx(25.77, abs=0.01)
    assert s.charge[0] == pytest.approx(2.0 / 0.91**2, abs=1e-6)
    assert s.discharge[1] == pytest.approx(2.0, abs=1e-6)
    assert 25.77 < 38.588


def test_toy_lp_relaxation_equals_milp():
    inst = toy_instance()
    lp = solve_lp(inst.lp)
    assert lp.objective == pytest.approx(solve_milp(inst).meta["objective"], abs=1e-9)


def test_zero_problem_is_idle(cfg4):
    inst = build_instance(np.zeros(96), np.zeros(96), TARIFF, cfg4, 0.0)
    s = solve_milp(inst, backend="highs")
    assert s.meta["objective"] == pytest.approx(0.0, abs=1e-9)
    assert np.abs(s.charge).max() < 1e-9 and np.abs(s.discharge).max() < 1e-9


def test_surplus_only_day_charges_first(cfg4):
    pv = np.zeros(48)
    pv[20:26] = 2.0
    inst = build_instance(np.zeros(48), pv, TARIFF, cfg4, 0.0)
    s = solve_milp(inst, backend="highs")
    # charging a kWh cannot earn later (no demand) but must never be worse than exporting it;
    # with export paying and no demand, exporting strictly wins, so check the enumerated pair
    export_first = -0.5 * TARIFF.fit * pv.sum()
    assert s.meta["objective"] <= export_first + 1e-9


def test_surplus_with_evening_demand_charges_before_exporting(cfg4):
    pv = np.zeros(48)
    pv[20:26] = 2.0
    d = np.zeros(48)
    d[36:40] = 1.0
    s = solve_milp(build_instance(d, pv, TARIFF, cfg4, 0.0), backend="highs")
    assert s.charge[20:26].sum() > 0
    assert s.grid_import[36:40].sum() == pytest.approx(0.0, abs=1e-9)


def test_infeasible_start():
    with pytest.raises(MilpError, match="infeasible"):
        solve_milp(build_instance([1.0], [0.0], TARIFF, TOY, -1.0))


def test_length_mismatch():
    with pytest.raises(ValueError, match="mismatch"):
        build_instance([1.0, 2.0], [0.0], TARIFF, TOY, 0.0)


@pytest.mark.parametrize("seed", range(4))
def test_own_solver_matches_highs(seed, cfg4):
    rng = np.random.default_rng(seed)
    d = rng.uniform(0, 3, 12)
    p = rng.uniform(0, 4, 12)
    inst = build_instance(d, p, TARIFF, cfg4, rng.uniform(0, 5.9), start_slot=int(rng.integers(48)))
    a = solve_milp(inst)
    b = solve_milp(inst, backend="highs")
    assert a.meta["objective"] == pytest.approx(b.meta["objective"], abs=1e-6)
    assert validate_schedule(a, d, p, cfg4.battery) == []


def test_exhaustive_small_instance():
    # 3 slots, 5 power levels each, exact when levels hit the optimum; bound otherwise
    rng = np.random.default_rng(7)
    d = rng.uniform(0, 2, 3)
    p = rng.uniform(0, 2, 3)
    cfg = SystemConfig(3.0, BatterySpec("small", 1.0, 1.0, 1.0, efficiency=1.0))
    rates = np.array([20.0, 40.0, 30.0])
    inst = build_instance(d, p, TARIFF, cfg, 0.5, rates=rates)
    obj = solve_milp(inst).meta["objective"]
    best = np.inf
    for seq in itertools.product(np.linspace(-1, 1, 41), repeat=3):
        e = 0.5 + 0.5 * np.cumsum(seq)
        if e.min() < -1e-12 or e.max() > 1 + 1e-12:
            continue
        net = d - p + np.array(seq)
        best = min(best, float(np.sum(0.5 * np.where(net > 0, rates * net, TARIFF.fit * net))))
    assert obj <= best + 1e-9
    assert best - obj <= 3 * 0.5 * 0.05 * 40.0


def test_milp_dominates_heuristics(cfg4):
    d, p = days_of(3)
    s = rolling_horizon(d, p, TARIFF, cfg4)
    rates = TARIFF.rates_for(d.size)
    cost = schedule_cost(s, rates, TARIFF.fit)
    for h in (scm_schedule(d, p, cfg4), toua_schedule(d, p, cfg4, tariff=TARIFF)):
        assert cost <= schedule_cost(h, rates, TARIFF.fit) + 1e-6
    assert validate_schedule(s, d, p, cfg4.battery) == []
    assert not np.any((s.grid_import > 1e-9) & (s.grid_export > 1e-9))


def test_rolling_horizon_day_one_matches_two_day_solve(cfg4):
    d, p = days_of(3)
    s = rolling_horizon(d, p, TARIFF, cfg4)
    direct = solve_milp(build_instance(d[:96], p[:96], TARIFF, cfg4, cfg4.initial_soc), backend="highs")
    rates = TARIFF.rates_for(48)
    assert schedule_cost(s.slice(0, 48), rates, TARIFF.fit) == pytest.approx(
        schedule_cost(direct.slice(0, 48), rates, TARIFF.fit), abs=1e-6)
    np.testing.assert_allclose(s.soc[:48], direct.soc[:48], atol=1e-6)


def test_rolling_horizon_soc_continuity(cfg4):
    d, p = days_of(3)
    s = rolling_horizon(d, p, TARIFF, cfg4)
    for day in (1, 2):
        assert s.slice(day * 48, day * 48 + 48).initial_soc == s.soc[day * 48 - 1]


def test_rolling_horizon_zero_year_is_idle(cfg4):
    z = np.zeros(48 * 5)
    s = rolling_horizon(z, z, TARIFF, cfg4)
    assert s.charge.max() < 1e-9 and s.grid_import.max() < 1e-9


def test_lp_file_dump(tmp_path):
    path = tmp_path / "toy.lp"
    write_lp_file(toy_instance(), path)
    text = path.read_text()
    assert text.startswith("Minimize") or "Minimize" in text
    assert "charge_on_0" in text and "End" in text
