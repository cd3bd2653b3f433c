from __future__ import annotations

from collections import Counter

import numpy as np
import pytest

from hemsbench.data import (PROFILE_NAMES, CohortFormatError, bump_profiles, load_cohort,
                            load_profiles, synth_cohort, write_cohort, write_profiles)


def test_shipped_profiles_match_generator():
    np.testing.assert_allclose(load_profiles(), bump_profiles(), atol=1e-9)
    assert load_profiles().shape == (48, 5)
    np.testing.assert_allclose(load_profiles().sum(axis=0), 1.0)


def test_profile_file_round_trip(tmp_path):
    p = tmp_path / "prof.csv"
    write_profiles(p)
    np.testing.assert_allclose(load_profiles(p), bump_profiles(), atol=1e-9)
    p.write_text("a,b\n1,2\n")
    with pytest.raises(ValueError):
        load_profiles(p)


def test_synth_is_deterministic():
    a = synth_cohort(1, seed=3, days=7)[0]
    b = synth_cohort(1, seed=3, days=7)[0]
    np.testing.assert_array_equal(a.demand.values, b.demand.values)
    np.testing.assert_array_equal(a.pv.values, b.pv.values)
    assert a.pv_kwp == b.pv_kwp


def test_pv_is_zero_at_night():
    recs = synth_cohort(5, seed=1, days=30)
    for r in recs:
        night = r.pv.by_day()[:, :8]  # midnight to 04:00
        assert np.all(night == 0)
        assert r.pv.values.max() <= r.pv_kwp


def test_profile_mix_is_exact():
    recs = synth_cohort(50, seed=0, profile_mix=[0.2] * 5, days=1)
    assert Counter(r.profile for r in recs) == {name: 10 for name in PROFILE_NAMES}


def test_pairing_on_records():
    recs = synth_cohort(20, seed=2, days=1)
    for r in recs:
        expect = 6.5 if r.pv_kwp <= 4 else 9.8 if r.pv_kwp <= 6 else 14.0
        assert r.battery.nominal_kwh == expect


def test_cohort_csv_round_trip(tmp_path):
    recs = synth_cohort(3, seed=5, days=3)
    path = tmp_path / "cohort.csv"
    write_cohort(path, recs)
    back = load_cohort(path)
    assert [r.id for r in back] == [r.id for r in recs]
    for a, b in zip(recs, back):
        np.testing.assert_allclose(a.demand.values, b.demand.values, atol=5e-5)
        assert a.pv_kwp == b.pv_kwp


def test_gap_day_rejects_customer(tmp_path):
    recs = synth_cohort(2, seed=5, days=3)
    path = tmp_path / "cohort.csv"
    write_cohort(path, recs)
    lines = path.read_text().splitlines()
    # drop c000's second day entirely
    kept = [ln for ln in lines if not (ln.startswith("c000,") and ",2012-07-02," in ln)]
    path.write_text("\n".join(kept) + "\n")
    why: dict[str, str] = {}
    back = load_cohort(path, rejected=why)
    assert [r.id for r in back] == ["c001"]
    assert why == {"c000": "incomplete series"}


def test_bad_rows_listed(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("customer_id,date,slot,demand_kw,pv_kw\n"
                    "a,2012-07-01,0,1.0,0.0\n"
                    "a,2012-07-01,99,1.0,0.0\n"
                    "a,2012-07-01,1,-1.0,0.0\n")
    with pytest.raises(CohortFormatError) as err:
        load_cohort(path)
    assert err.value.lines == [3, 4]


def test_missing_pv_size_is_inferred(tmp_path):
    path = tmp_path / "c.csv"
    rows = ["customer_id,date,slot,demand_kw,pv_kw"]
    rows += [f"x,2012-07-01,{s},0.5,{3.9 if s == 24 else 0.0}" for s in range(48)]
    path.write_text("\n".join(rows) + "\n")
    (rec,) = load_cohort(path)
    assert rec.pv_kwp == 4.0
    assert load_cohort(path, {"x": 6.0})[0].pv_kwp == 6.0
