from __future__ import annotations

import numpy as np
import pytest

from hemsbench.core import (HalfHourSeries, Schedule, SystemConfig, TouTariff, balance_grid,
                            period_map_from_hours, tariff_rate, validate_schedule)
from hemsbench.heuristics import scm_schedule


def slot_at(hh, mm=0):
    return (hh * 60 + mm) // 30


@pytest.mark.parametrize("slot, rate", [
    (slot_at(17, 30), 38.588),
    (slot_at(2), 21.340),
    (slot_at(12), 37.147),
    (slot_at(7), 38.588),
    (slot_at(6, 30), 21.340),
    (slot_at(21, 30), 37.147),
    (slot_at(22), 21.340),
])
def test_tariff_rate_examples(tariff, slot, rate):
    assert tariff_rate(tariff, slot) == rate


def test_period_ranges_match_slot_translation(tariff):
    pm = tariff.period_map
    peak = set(range(14, 18)) | set(range(34, 40))
    shoulder = set(range(18, 34)) | set(range(40, 44))
    for s in range(48):
        expect = "peak" if s in peak else "shoulder" if s in shoulder else "offpeak"
        assert pm[s] == expect


def test_tariff_rate_rejects_bad_slot(tariff):
    with pytest.raises(ValueError):
        tariff_rate(tariff, 48)
    with pytest.raises(ValueError):
        tariff_rate(tariff, -1)


def test_period_map_must_partition_day():
    with pytest.raises(ValueError, match="not covered"):
        period_map_from_hours({"peak": [(0, 12)], "offpeak": [(12, 23)]})
    with pytest.raises(ValueError, match="both"):
        period_map_from_hours({"peak": [(0, 13)], "offpeak": [(12, 24)]})


def test_tariff_from_config_overrides():
    t = TouTariff.from_config({"peak": 50, "fit": 5,
                               "periods": {"peak": [[16, 20]], "shoulder": [[7, 16]],
                                           "offpeak": [[20, 24], [0, 7]]}})
    assert tariff_rate(t, slot_at(16)) == 50
    assert t.fit == 5 and t.offpeak == 21.340


def test_half_hour_series_validation():
    s = HalfHourSeries(np.ones(96))
    assert s.days == 2 and s.energy() == pytest.approx(48.0)
    assert s.by_day().shape == (2, 48)
    with pytest.raises(ValueError):
        HalfHourSeries(np.ones(50))
    with pytest.raises(ValueError):
        HalfHourSeries(-np.ones(48))
    with pytest.raises(ValueError):
        HalfHourSeries(np.full(48, np.nan))


def test_system_config_pairs_battery():
    assert SystemConfig.for_pv(4).battery.nominal_kwh == 6.5
    assert SystemConfig.for_pv(6).battery.nominal_kwh == 9.8
    assert SystemConfig.for_pv(7).battery.nominal_kwh == 14.0
    assert SystemConfig.for_pv(4).initial_soc == pytest.approx(0.5 * 5.9)
    with pytest.raises(ValueError):
        SystemConfig.for_pv(2)


def test_validate_all_zero_schedule_is_clean():
    z = np.zeros(4)
    s = Schedule(z, z, z, z, z, 0.0)
    assert validate_schedule(s, z, z) == []


def test_validate_flags_grid_simultaneity():
    z = np.zeros(4)
    gi = np.array([0, 1.0, 0, 0])
    s = Schedule(gi, gi, z, z, z, 0.0)
    v = validate_schedule(s, z, z)
    assert [(x.slot, x.invariant) for x in v] == [(1, "grid simultaneity")]


def test_validate_flags_balance_and_bounds(resu):
    z = np.zeros(2)
    s = Schedule(np.array([1.0, 0]), z, z, z, np.array([0.0, 9.0]), 0.0)
    kinds = {(x.slot, x.invariant) for x in validate_schedule(s, z, z, resu)}
    assert kinds == {(0, "power balance"), (1, "soc bounds")}


def test_validate_length_mismatch():
    z = np.zeros(4)
    with pytest.raises(ValueError, match="length"):
        validate_schedule(Schedule(z, z, z, z, z, 0.0), np.zeros(3), z)


def test_scm_four_slot_day_validates(cfg4):
    # hand trace: surplus, surplus, deficit, deficit
    d = np.array([1.0, 0.5, 2.0, 3.0])
    pv = np.array([3.0, 2.0, 0.0, 0.0])
    s = scm_schedule(d, pv, cfg4)
    assert validate_schedule(s, d, pv, cfg4.battery) == []
    e0 = 2.95
    e1 = e0 + 0.5 * 0.91 * 2.0
    e2 = e1 + 0.5 * 0.91 * 1.5
    np.testing.assert_allclose(s.charge, [2.0, 1.5, 0, 0])
    np.testing.assert_allclose(s.soc[:2], [e1, e2])
    np.testing.assert_allclose(s.discharge, [0, 0, 2.0, 3.0])
    assert s.grid_import.sum() == 0 and s.grid_export.sum() == 0


def test_balance_grid_and_schedule_helpers():
    imp, exp = balance_grid([2, 0], [0, 3], [0, 1], [1, 0])
    np.testing.assert_allclose(imp, [1, 0])
    np.testing.assert_allclose(exp, [0, 2])
    s = Schedule.idle([1, 0], [0, 2], 1.5)
    np.testing.assert_allclose(s.soc, [1.5, 1.5])
    assert s.slice(1, 2).initial_soc == 1.5
    cat = Schedule.concat([s, s])
    assert len(cat) == 4 and cat.initial_soc == 1.5
