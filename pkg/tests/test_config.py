from __future__ import annotations

import json

import pytest

from hemsbench import config as C


def test_defaults():
    cfg = C.load_config()
    assert cfg["strategies"] == list(C.STRATEGIES)
    assert cfg["forecast"] == ["perfect", "persistence"]
    assert C.tariff_from(cfg).fit == 9.0
    assert C.mdp_from(cfg).n_actions == 43


def test_yaml_file_merges(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text("strategies: milp, scm\nforecast: perfect\nmilp:\n  gap_tol: 1.0e-4\n"
                 "aging:\n  k_cyc: {A: 4000}\n")
    cfg = C.load_config(p)
    assert cfg["strategies"] == ["scm", "milp"]  # canonical order
    assert cfg["forecast"] == ["perfect"]
    assert cfg["milp"]["gap_tol"] == 1e-4 and cfg["milp"]["backend"] == "highs"
    assert C.aging_from(cfg).k_cyc_a == 4000


def test_json_file_and_overrides(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"seed": 4, "battery_model": "linear"}))
    cfg = C.load_config(p, forecast="both", seed=9)
    assert cfg["seed"] == 9 and cfg["forecast"] == ["perfect", "persistence"]
    assert C.efficiency_from(cfg).kind == "linear"
    assert C.nonlinear_from(cfg).kind == "nonlinear"


def test_rejects_unknown_names(tmp_path):
    with pytest.raises(ValueError, match="unknown strategies"):
        C.load_config(strategies="scm,magic")
    with pytest.raises(ValueError):
        C.load_config(battery_model="quantum")
    p = tmp_path / "bad.yaml"
    p.write_text("- a\n- b\n")
    with pytest.raises(ValueError, match="mapping"):
        C.load_config(p)
