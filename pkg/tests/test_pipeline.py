"""End-to-end orchestration: manifest contract, digests, stage failures."""

from __future__ import annotations

import json

import pandas as pd
import pytest

from hazardsim import pipeline
from hazardsim.config import load_config
from hazardsim.errors import PipelineStageError
from hazardsim.synth import default_spec

ALL_TABLES = [
    "table_cohort_summary.csv",
    "table_split_summary.csv",
    "table_metrics_main.csv",
    "table_metrics_by_group.csv",
    "table_censoring_marginal_curve.csv",
    "table_censoring_diagnostics.csv",
    "table_endpoint_sensitivity.csv",
    "table_model_ablation.csv",
    "table_censoring_anchor_sensitivity.csv",
    "table_policy_spec.csv",
    "table_policy_scenarios_main.csv",
    "table_policy_scenario_params.csv",
    "table_policy_deltaS_by_week_by_scenario.csv",
    "table_policy_deltaS_at_horizons_by_scenario.csv",
    "table_policy_horizons_dual.csv",
    "table_policy_mech_operator_spec.csv",
    "table_policy_activation_summary.csv",
    "table_policy_covariate_overwrites.csv",
    "table_policy_covariate_propagation_checks.csv",
    "table_rq2_sensitivity_grid.csv",
    "rq3_policy_bootstrap_wide.csv",
    "rq3_gap_at_policy_horizon.csv",
    "rq3_gap_at_metrics_horizon.csv",
]


@pytest.fixture(scope="module")
def run(tmp_path_factory):
    out = tmp_path_factory.mktemp("run_all")
    cfg = load_config(None)
    cfg["subgroup"]["b_replicates"] = 15
    spec = default_spec(n_enrollments=200, seed=3)
    manifest = pipeline.run_all(cfg, out, synth_spec=spec)
    return {"out": out, "cfg": cfg, "manifest": manifest}


def test_manifest_lists_every_table_once(run):
    assert sorted(run["manifest"]["tables"]) == sorted(ALL_TABLES)
    tables_dir = run["out"] / pipeline.TABLES_SUBDIR
    on_disk = sorted(p.name for p in tables_dir.glob("*.csv"))
    assert on_disk == sorted(ALL_TABLES)


def test_manifest_digests_recompute(run):
    tables_dir = run["out"] / pipeline.TABLES_SUBDIR
    for name, digest in run["manifest"]["tables"].items():
        assert pipeline.sha256_file(tables_dir / name) == digest, name
    for rel, digest in run["manifest"]["files"].items():
        assert pipeline.sha256_file(run["out"] / rel) == digest, rel


def test_manifest_on_disk_matches_return(run):
    stored = json.loads((run["out"] / "outputs_v2" / "manifest.json").read_text())
    assert stored == run["manifest"]


def test_manifest_records_config_and_source(run):
    assert run["manifest"]["data_source"] == "synthetic:seed=3:n=200"
    assert run["manifest"]["config"]["subgroup"]["b_replicates"] == 15
    assert run["manifest"]["artifact_format"] == 1


def test_endpoint_rows_match_metrics_main(run):
    tables_dir = run["out"] / pipeline.TABLES_SUBDIR
    sens = pd.read_csv(tables_dir / "table_endpoint_sensitivity.csv")
    main = pd.read_csv(tables_dir / "table_metrics_main.csv")
    primary = sens[sens["endpoint"] == "primary"].set_index("horizon")
    for horizon in ("t_policy", "t_eval_metrics"):
        want = main[
            (main["metric"] == "brier_ipcw")
            & (main["partition"] == "test")
            & (main["horizon"] == horizon)
        ]["value"].iloc[0]
        assert primary.loc[horizon, "brier_ipcw"] == want


def test_policy_null_check_columns(run):
    tables_dir = run["out"] / pipeline.TABLES_SUBDIR
    checks = pd.read_csv(tables_dir / "table_policy_covariate_propagation_checks.csv")
    assert not checks.empty
    assert checks["alpha_zero_reproduces_baseline"].all()
    assert (checks["n_event_rows_modified"] == 0).all()
    assert (checks["alpha_zero_max_abs_hazard_delta"] == 0.0).all()


def test_run_all_deterministic(tmp_path):
    cfg = load_config(None)
    cfg["subgroup"]["b_replicates"] = 5
    spec = default_spec(n_enrollments=120, seed=9)
    m1 = pipeline.run_all(cfg, tmp_path / "a", synth_spec=spec)
    m2 = pipeline.run_all(cfg, tmp_path / "b", synth_spec=spec)
    assert m1["tables"] == m2["tables"]
    assert m1["files"] == m2["files"]


def test_bad_data_dir_names_ingest_stage(tmp_path):
    cfg = load_config(None)
    with pytest.raises(PipelineStageError) as err:
        pipeline.run_all(cfg, tmp_path / "o", data_dir=tmp_path / "missing")
    assert err.value.stage == "ingest"
    assert err.value.code.startswith("ingest:")


def test_split_panel_partitions(fitted_cohort):
    pp, split = fitted_cohort["pp"], fitted_cohort["split"]
    pp_train, pp_test, folds = pipeline.split_panel(pp, split)
    assert len(pp_train) + len(pp_test) == len(pp)
    train_keys = set(map(tuple, pp_train[["id_student", "code_module", "code_presentation"]].values))
    test_keys = set(map(tuple, pp_test[["id_student", "code_module", "code_presentation"]].values))
    assert not train_keys & test_keys
    assert len(folds) == len(pp_train)
    assert set(folds) <= set(range(5))
