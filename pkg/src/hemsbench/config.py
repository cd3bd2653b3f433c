"""Experiment configuration: defaults, file loading and typed views.

Files may be YAML or JSON. Missing keys fall back to :data:`DEFAULTS`;
nested mappings merge key by key.
"""

from __future__ import annotations

import copy
import json
from pathlib import Path
from typing import Any, Mapping

import yaml

from .battery import EfficiencyModel
from .core import TouTariff
from .degradation import AgingParams
from .dp import MdpSpec
from .economics import CostParams
from .heuristics import TouaPolicy
from .pfa import PolicyArch

STRATEGIES = ("scm", "toua", "scm_toua", "milp", "dp", "pfas", "pfag")
FORECASTS = ("perfect", "persistence")

DEFAULTS: dict[str, Any] = {
    "seed": 0,
    "workers": 1,
    "cohort": {"source": "synth", "n": 10, "seed": 0, "days": 365, "profile_mix": None,
               "path": None},
    "strategies": list(STRATEGIES),
    "forecast": list(FORECASTS),
    "battery_model": "nonlinear",
    "tariff": {},
    "battery": {"model": "nonlinear", "curves": {}},
    "heuristics": {"toua": {"target": 0.30}, "scm_toua": {"low_pv_threshold": 0.5}},
    "milp": {"backend": "highs", "gap_tol": 1e-6, "horizon_days": 2, "grid_limit": 20.0},
    "dp": {"n_soc": 101, "n_actions": 43},
    "pfa": {"window": 48, "hidden": 32, "epochs": 60, "batch": 256, "lr": 3e-3,
            "rollout_days": 14},
    "aging": {},
    "economics": {"inflation": 0.03, "discount": 0.05, "lifespan": 20},
    "timing": {"enabled": True, "repeats": 5, "day": 7},
    "plot_data": False,
}


def _merge(base: dict, over: Mapping) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, Mapping) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def load_config(path: str | Path | None = None, **overrides) -> dict[str, Any]:
    """Defaults merged with a YAML/JSON file and then keyword overrides."""
    cfg = copy.deepcopy(DEFAULTS)
    if path is not None:
        text = Path(path).read_text(encoding="utf-8")
        data = json.loads(text) if str(path).endswith(".json") else yaml.safe_load(text)
        if data is None:
            data = {}
        if not isinstance(data, Mapping):
            raise ValueError(f"{path}: top level must be a mapping")
        cfg = _merge(cfg, data)
    cfg = _merge(cfg, {k: v for k, v in overrides.items() if v is not None})
    return normalise(cfg)


def normalise(cfg: Mapping[str, Any]) -> dict[str, Any]:
    cfg = _merge(DEFAULTS, cfg)
    for key, allowed in (("strategies", STRATEGIES), ("forecast", FORECASTS)):
        val = cfg[key]
        if isinstance(val, str):
            val = [v.strip() for v in val.split(",") if v.strip()]
        if key == "forecast" and val == ["both"]:
            val = list(FORECASTS)
        bad = [v for v in val if v not in allowed]
        if bad:
            raise ValueError(f"unknown {key}: {', '.join(bad)}")
        cfg[key] = [v for v in allowed if v in val]  # canonical order
    if cfg["battery_model"] not in ("linear", "nonlinear"):
        raise ValueError("battery_model must be linear or nonlinear")
    return cfg


def tariff_from(cfg) -> TouTariff:
    return TouTariff.from_config(cfg.get("tariff", {}))


def efficiency_from(cfg) -> EfficiencyModel:
    bat = dict(cfg.get("battery", {}))
    bat["model"] = cfg.get("battery_model", bat.get("model", "nonlinear"))
    return EfficiencyModel.from_config(bat)


def nonlinear_from(cfg) -> EfficiencyModel:
    """The curve model used for replay checks, whatever the scheduling model."""
    bat = dict(cfg.get("battery", {}))
    bat["model"] = "nonlinear"
    return EfficiencyModel.from_config(bat)


def toua_from(cfg) -> TouaPolicy:
    h = cfg.get("heuristics", {})
    return TouaPolicy(target=float(h.get("toua", {}).get("target", 0.30)),
                      low_pv_threshold=float(h.get("scm_toua", {}).get("low_pv_threshold", 0.5)))


def aging_from(cfg) -> AgingParams:
    return AgingParams.from_config(cfg.get("aging", {}))


def mdp_from(cfg) -> MdpSpec:
    d = cfg.get("dp", {})
    return MdpSpec(int(d.get("n_soc", 101)), int(d.get("n_actions", 43)))


def cost_from(cfg) -> CostParams:
    e = cfg.get("economics", {})
    return CostParams(float(e.get("inflation", 0.03)), float(e.get("discount", 0.05)),
                      int(e.get("lifespan", 20)), e.get("c0"))


def arch_from(cfg) -> PolicyArch:
    p = cfg.get("pfa", {})
    return PolicyArch(hidden=int(p.get("hidden", 32)), epochs=int(p.get("epochs", 60)),
                      batch=int(p.get("batch", 256)), lr=float(p.get("lr", 3e-3)))
