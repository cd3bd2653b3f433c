from __future__ import annotations

import numpy as np
import pytest

from conftest import sunny_day
from hemsbench.battery import LINEAR, NONLINEAR, RESU_6_5, BatterySpec, replay_schedule
from hemsbench.core import SystemConfig, TouTariff, validate_schedule
from hemsbench.dp import MdpSpec, backward_induction, dp_schedule, simulate_policy
from hemsbench.milp import schedule_cost
from oracles import enumerate_dp

TARIFF = TouTariff()
# 5 energy levels 0.5 kWh apart and 5 powers 1 kW apart: every landing point is on the grid
ALIGNED = BatterySpec("aligned", 2.0, 2.0, 2.0, efficiency=1.0)
SMALL = MdpSpec(5, 5)


def test_mdp_grids_include_endpoints_and_zero():
    m = MdpSpec()
    g = m.soc_grid(RESU_6_5)
    a = m.action_grid(RESU_6_5)
    assert g[0] == RESU_6_5.e_min and g[-1] == RESU_6_5.e_max and g.size == 101
    assert a[0] == -4.2 and a[-1] == 4.2 and 0.0 in a
    with pytest.raises(ValueError):
        MdpSpec(5, 4)


def test_terminal_layer_is_zero():
    d, p = sunny_day()
    t = backward_induction(d, p, TARIFF, RESU_6_5, mdp=MdpSpec(21, 11))
    assert np.all(t.V[-1] == 0) and np.all(np.isfinite(t.V))


def test_zero_day_from_empty_is_idle():
    z = np.zeros(48)
    t = backward_induction(z, z, TARIFF, RESU_6_5, mdp=MdpSpec(21, 11))
    idle = int(np.flatnonzero(t.actions == 0.0)[0])
    # buying off-peak to sell at the feed-in rate never pays
    assert np.allclose(t.V[:, 0], 0.0)
    assert np.all(t.policy[:, 0] == idle)
    # stored energy is worth its feed-in value, since the day ends with zero terminal value
    assert np.all(t.V[0, 1:] < 0)


@pytest.mark.parametrize("seed", range(3))
def test_value_matches_enumeration(seed):
    rng = np.random.default_rng(seed)
    d, p = rng.uniform(0, 2, 8), rng.uniform(0, 2, 8)
    start = int(rng.integers(0, 40))
    t = backward_induction(d, p, TARIFF, ALIGNED, LINEAR, SMALL, start_slot=start)
    ref = enumerate_dp(d, p, t.rates, TARIFF.fit, ALIGNED, t.soc, t.actions)
    np.testing.assert_allclose(t.V[0], ref, rtol=0, atol=1e-12)


def test_policy_realises_enumerated_optimum():
    rng = np.random.default_rng(11)
    d, p = rng.uniform(0, 2, 8), rng.uniform(0, 2, 8)
    t = backward_induction(d, p, TARIFF, ALIGNED, LINEAR, SMALL, start_slot=30)
    s = simulate_policy(t, d, p, ALIGNED, 1.0, LINEAR)
    realised = schedule_cost(s, t.rates, TARIFF.fit) / 100
    ref = enumerate_dp(d, p, t.rates, TARIFF.fit, ALIGNED, 1.0, t.actions)
    quantum = 0.5 * 1.0 * t.rates.max() / 100
    assert realised <= ref + quantum
    assert realised == pytest.approx(ref, abs=1e-12)


def test_value_monotone_in_energy():
    d, p = sunny_day(seed=3)
    t = backward_induction(d, p, TARIFF, RESU_6_5, mdp=MdpSpec(41, 21))
    assert np.all(np.diff(t.V, axis=1) <= 1e-12)


def test_grid_refinement_does_not_hurt():
    d, p = sunny_day(seed=5)
    cfg = SystemConfig.for_pv(4)
    coarse = dp_schedule(d, p, TARIFF, cfg, LINEAR, MdpSpec(11, 5))
    fine = dp_schedule(d, p, TARIFF, cfg, LINEAR, MdpSpec(21, 9))
    rates = TARIFF.rates_for(48)
    # 21 levels contain the 11-level grid and 9 actions the 5, so the fine grid
    # can reproduce every coarse decision
    assert schedule_cost(fine, rates, 9.0) <= schedule_cost(coarse, rates, 9.0) + 1e-9


def test_nonlinear_schedule_has_no_replay_violations():
    d, p = sunny_day(pv_peak=5.0, seed=1)
    d2, p2 = sunny_day(pv_peak=1.0, seed=2)
    d, p = np.concatenate([d, d2]), np.concatenate([p, p2])
    cfg = SystemConfig.for_pv(4)
    s = dp_schedule(d, p, TARIFF, cfg, NONLINEAR, MdpSpec(51, 21))
    assert replay_schedule(s, cfg.battery, NONLINEAR).violations == []
    assert validate_schedule(s, d, p) == []
    assert s.soc.min() >= 0 and s.soc.max() <= cfg.battery.e_max
    assert s.slice(48, 96).initial_soc == s.soc[47]


def test_no_arbitrage_gives_net_metering():
    d, _ = sunny_day()
    z = np.zeros(48)
    flat = np.full(48, 30.0)
    t = backward_induction(d, z, TARIFF, RESU_6_5, LINEAR, MdpSpec(21, 11), rates=flat)
    s = simulate_policy(t, d, z, RESU_6_5, 0.0, LINEAR)
    np.testing.assert_allclose(s.grid_import - s.grid_export, d)
    assert np.all(s.soc == 0.0)


def test_forecast_inputs_drive_decisions():
    d, p = sunny_day()
    cfg = SystemConfig.for_pv(4)
    blind = dp_schedule(d, p, TARIFF, cfg, LINEAR, MdpSpec(11, 5), demand_fc=d * 0, pv_fc=p * 0)
    seeing = dp_schedule(d, p, TARIFF, cfg, LINEAR, MdpSpec(11, 5))
    # with no forecast PV there is nothing worth storing
    assert blind.charge.max() == 0
    assert seeing.charge.max() > 0
    np.testing.assert_allclose(blind.grid_import - blind.grid_export,
                               d - p + blind.charge - blind.discharge)
