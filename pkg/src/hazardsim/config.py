"""Run configuration: strict schema, protocol defaults, canonical snapshot.

Defaults encode the full reporting protocol (q=4 split buckets, 30% test,
k=5 folds, horizons 18/38, g_min=0.05, weight cap 20, B=500 bootstrap,
seed 42, the three shock strengths and the shared mechanism uplift).
Unknown keys are rejected so silent protocol drift is impossible.
"""

from __future__ import annotations

import copy
import json
from pathlib import Path

from .errors import ConfigError

DEFAULT_SCENARIOS = [
    {
        "scenario_id": "shock_conservative",
        "branch": "shock",
        "status": "anchored",
        "delta_shock": 0.08,
    },
    {
        "scenario_id": "shock_hypothetical_a",
        "branch": "shock",
        "status": "hypothetical",
        "delta_shock": 0.20,
    },
    {
        "scenario_id": "shock_hypothetical_b",
        "branch": "shock",
        "status": "hypothetical",
        "delta_shock": 0.60,
    },
    {
        "scenario_id": "mech_shared",
        "branch": "mechanism_aware",
        "status": "anchored",
        "alpha_week0": 0.35,
        "alpha_week1": 0.10,
    },
]

DEFAULT_CONFIG = {
    "master_seed": 42,
    "split": {
        "q": 4,
        "test_size": 0.30,
        "holdout_module": None,
        "holdout_presentation": None,
    },
    "model": {"lambda": 1.0, "max_iter": 100, "tolerance": 1e-6},
    "calibration": {"k": 5},
    "horizons": {"t_policy": 18, "t_eval_policy": 38, "g_min": 0.05, "weight_cap": 20.0},
    "metrics": {"ece_bins": 15},
    "scenarios": DEFAULT_SCENARIOS,
    "grid": {
        "r_star": [1, 2, 3],
        "window_weeks": [1, 2, 3, 4],
        "decay_type": ["kb2023_step_2w"],
        "alpha_week0": [0.20, 0.35, 0.50],
        "alpha_week1": [0.00, 0.10],
        "delta_shock": [0.08, 0.20, 0.60],
    },
    "subgroup": {
        "column": "gender",
        "mapping": {"F": 1, "M": 0},
        "b_replicates": 500,
        "reference_scenario": "shock_hypothetical_a",
        "stratified": False,
    },
    "censoring": {"anchor_trims": [1, 2]},
    "endpoint": {"composite": True},
    "ablation": {"variants": ["full", "no_recency_streak", "no_activity"]},
}

_REPLACED_WHOLESALE = {"scenarios", "subgroup.mapping"}


def _merge(default, provided, path: str):
    if isinstance(default, dict):
        if not isinstance(provided, dict):
            raise ConfigError(f"config key '{path}' must be a mapping")
        out = {}
        for key in provided:
            if key not in default:
                where = f"{path}.{key}" if path else key
                raise ConfigError(f"unknown config key '{where}'")
        for key, dval in default.items():
            sub_path = f"{path}.{key}" if path else key
            if key in provided:
                if sub_path in _REPLACED_WHOLESALE:
                    out[key] = copy.deepcopy(provided[key])
                else:
                    out[key] = _merge(dval, provided[key], sub_path)
            else:
                out[key] = copy.deepcopy(dval)
        return out
    if isinstance(default, bool):
        if not isinstance(provided, bool):
            raise ConfigError(f"config key '{path}' must be a boolean")
        return provided
    if isinstance(default, (int, float)) and default is not None:
        if isinstance(provided, bool) or not isinstance(provided, (int, float)):
            raise ConfigError(f"config key '{path}' must be a number")
        return provided
    if isinstance(default, list):
        if not isinstance(provided, list):
            raise ConfigError(f"config key '{path}' must be a list")
        return copy.deepcopy(provided)
    return copy.deepcopy(provided)


def _validate(cfg: dict) -> None:
    checks = [
        ("split.q", cfg["split"]["q"] >= 1),
        ("split.test_size", 0.0 < cfg["split"]["test_size"] < 1.0),
        ("model.lambda", cfg["model"]["lambda"] > 0),
        ("model.max_iter", cfg["model"]["max_iter"] >= 1),
        ("model.tolerance", cfg["model"]["tolerance"] > 0),
        ("calibration.k", cfg["calibration"]["k"] >= 2),
        ("horizons.t_policy", cfg["horizons"]["t_policy"] >= 0),
        ("horizons.t_eval_policy", cfg["horizons"]["t_eval_policy"] >= cfg["horizons"]["t_policy"]),
        ("horizons.g_min", 0.0 < cfg["horizons"]["g_min"] < 1.0),
        ("horizons.weight_cap", cfg["horizons"]["weight_cap"] >= 1.0),
        ("metrics.ece_bins", cfg["metrics"]["ece_bins"] >= 1),
        ("subgroup.b_replicates", cfg["subgroup"]["b_replicates"] >= 1),
    ]
    for path, ok in checks:
        if not ok:
            raise ConfigError(f"config key '{path}' is out of its valid range")
    holdout = (cfg["split"]["holdout_module"], cfg["split"]["holdout_presentation"])
    if (holdout[0] is None) != (holdout[1] is None):
        raise ConfigError(
            "config keys 'split.holdout_module' and 'split.holdout_presentation' "
            "must be set together"
        )
    if not isinstance(cfg["subgroup"]["mapping"], dict) or not cfg["subgroup"]["mapping"]:
        raise ConfigError("config key 'subgroup.mapping' must be a non-empty mapping")
    if not isinstance(cfg["scenarios"], list) or not cfg["scenarios"]:
        raise ConfigError("config key 'scenarios' must be a non-empty list")
    ids = [s.get("scenario_id") for s in cfg["scenarios"]]
    if len(set(ids)) != len(ids):
        raise ConfigError("config key 'scenarios' has duplicate scenario_id values")
    ref = cfg["subgroup"]["reference_scenario"]
    if ref not in ids:
        raise ConfigError(
            f"config key 'subgroup.reference_scenario' names unknown scenario '{ref}'"
        )
    for trim in cfg["censoring"]["anchor_trims"]:
        if not isinstance(trim, int) or trim < 0:
            raise ConfigError("config key 'censoring.anchor_trims' must hold ints >= 0")


def load_config(path: str | Path | None = None) -> dict:
    """Resolved config: defaults overlaid with the file at `path` (JSON)."""
    if path is None:
        provided = {}
    else:
        provided = json.loads(Path(path).read_text())
        if not isinstance(provided, dict):
            raise ConfigError("config file must hold a JSON object")
    cfg = _merge(DEFAULT_CONFIG, provided, "")
    _validate(cfg)
    return cfg


def config_snapshot(cfg: dict) -> str:
    """Canonical serialized form, stable across runs for identical configs."""
    return json.dumps(cfg, sort_keys=True, separators=(",", ":"))
