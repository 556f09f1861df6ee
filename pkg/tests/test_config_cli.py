"""Config schema enforcement and end-to-end CLI subcommand round trips."""

from __future__ import annotations

import json

import pandas as pd
import pytest

from hazardsim import cli
from hazardsim.config import DEFAULT_CONFIG, config_snapshot, load_config
from hazardsim.errors import ConfigError


def test_defaults_encode_protocol():
    cfg = load_config(None)
    assert cfg["master_seed"] == 42
    assert cfg["split"]["q"] == 4
    assert cfg["split"]["test_size"] == 0.30
    assert cfg["calibration"]["k"] == 5
    assert cfg["horizons"]["t_policy"] == 18
    assert cfg["horizons"]["t_eval_policy"] == 38
    assert cfg["horizons"]["g_min"] == 0.05
    assert cfg["horizons"]["weight_cap"] == 20.0
    assert cfg["subgroup"]["b_replicates"] == 500
    assert cfg["subgroup"]["mapping"] == {"F": 1, "M": 0}
    assert [s["scenario_id"] for s in cfg["scenarios"]] == [
        "shock_conservative",
        "shock_hypothetical_a",
        "shock_hypothetical_b",
        "mech_shared",
    ]


def test_loaded_config_is_deep_copy():
    cfg = load_config(None)
    cfg["split"]["q"] = 99
    cfg["scenarios"].pop()
    assert DEFAULT_CONFIG["split"]["q"] == 4
    assert len(DEFAULT_CONFIG["scenarios"]) == 4


def test_unknown_key_rejected_by_name(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"master_sede": 7}))
    with pytest.raises(ConfigError, match="master_sede"):
        load_config(path)


def test_unknown_nested_key_rejected_with_path(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"split": {"qq": 3}}))
    with pytest.raises(ConfigError, match="split.qq"):
        load_config(path)


def test_wrong_type_rejected(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"split": {"test_size": "lots"}}))
    with pytest.raises(ConfigError, match="split.test_size"):
        load_config(path)


def test_out_of_range_rejected(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"split": {"test_size": 1.5}}))
    with pytest.raises(ConfigError, match="valid range"):
        load_config(path)


def test_scenarios_replaced_wholesale(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(
        json.dumps(
            {
                "scenarios": [
                    {"scenario_id": "only", "branch": "shock", "status": "anchored",
                     "delta_shock": 0.1}
                ],
                "subgroup": {"reference_scenario": "only"},
            }
        )
    )
    cfg = load_config(path)
    assert [s["scenario_id"] for s in cfg["scenarios"]] == ["only"]


def test_reference_scenario_must_exist(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(
        json.dumps(
            {"scenarios": [{"scenario_id": "only", "branch": "shock",
                            "status": "anchored", "delta_shock": 0.1}]}
        )
    )
    with pytest.raises(ConfigError, match="reference_scenario"):
        load_config(path)


def test_holdout_pair_must_be_set_together(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"split": {"holdout_module": "AAA"}}))
    with pytest.raises(ConfigError, match="together"):
        load_config(path)


def test_negative_anchor_trim_rejected(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"censoring": {"anchor_trims": [1, -2]}}))
    with pytest.raises(ConfigError, match="anchor_trims"):
        load_config(path)


def test_snapshot_is_stable():
    assert config_snapshot(load_config(None)) == config_snapshot(load_config(None))


# ---------------------------------------------------------------------------
# CLI


def test_cli_config_error_exit_code(tmp_path, capsys):
    bad = tmp_path / "cfg.json"
    bad.write_text(json.dumps({"nope": 1}))
    rc = cli.main(["run-all", "--out", str(tmp_path / "o"), "--config", str(bad)])
    assert rc == 2
    assert "config error:" in capsys.readouterr().err


def test_cli_bad_holdout_string(tmp_path, capsys):
    raw_dir = tmp_path / "raw"
    assert cli.main(["synthesize", "--out-dir", str(raw_dir)]) == 0
    enr = tmp_path / "enr.parquet"
    assert cli.main(["ingest", "--data-dir", str(raw_dir), "--out", str(enr)]) == 0
    pp = tmp_path / "pp.parquet"
    assert (
        cli.main(
            ["build-person-period", "--enrollments", str(enr),
             "--data-dir", str(raw_dir), "--out", str(pp)]
        )
        == 0
    )
    rc = cli.main(
        ["split", "--pp", str(pp), "--holdout-run", "AAA", "--out", str(tmp_path / "s.csv")]
    )
    assert rc == 2
    assert "config error:" in capsys.readouterr().err


@pytest.fixture(scope="module")
def cli_chain(tmp_path_factory):
    """One synthesize->ingest->pp->split->train->censoring chain shared below."""
    root = tmp_path_factory.mktemp("chain")
    spec = root / "spec.json"
    spec.write_text(json.dumps({"n_enrollments": 150, "seed": 11, "censor_rate": 0.05}))
    cfg = root / "cfg.json"
    cfg.write_text(json.dumps({"subgroup": {"b_replicates": 25}}))
    raw_dir = root / "raw"
    enr = root / "enrollments.parquet"
    pp = root / "pp.parquet"
    split = root / "split.csv"
    model = root / "model.json"
    gmodel = root / "gmodel.json"
    steps = [
        ["synthesize", "--spec", str(spec), "--out-dir", str(raw_dir)],
        ["ingest", "--data-dir", str(raw_dir), "--out", str(enr)],
        ["build-person-period", "--enrollments", str(enr), "--data-dir", str(raw_dir),
         "--out", str(pp)],
        ["split", "--pp", str(pp), "--out", str(split)],
        ["train", "--pp", str(pp), "--split", str(split), "--out", str(model)],
        ["censoring", "--pp", str(pp), "--split", str(split), "--out", str(gmodel),
         "--tables-dir", str(root / "cens")],
    ]
    for argv in steps:
        assert cli.main(argv + ["--config", str(cfg)]) == 0, argv[0]
    return {"root": root, "cfg": cfg, "enr": enr, "pp": pp, "split": split,
            "model": model, "gmodel": gmodel}


def test_cli_chain_artifacts_exist(cli_chain):
    for key in ("enr", "pp", "split", "model", "gmodel"):
        assert cli_chain[key].exists(), key
    anchor = cli_chain["root"] / "cens" / "outputs_v2" / "tables"
    assert (anchor / "table_censoring_anchor_sensitivity.csv").exists()


def test_cli_split_respects_test_size(cli_chain):
    split = pd.read_csv(cli_chain["split"])
    share = (split["partition"] == "test").mean()
    assert 0.2 < share < 0.4


def test_cli_evaluate_composite(cli_chain):
    out = cli_chain["root"] / "eval"
    rc = cli.main(
        ["evaluate", "--model", str(cli_chain["model"]), "--gmodel", str(cli_chain["gmodel"]),
         "--pp", str(cli_chain["pp"]), "--split", str(cli_chain["split"]),
         "--out-dir", str(out), "--endpoint", "composite",
         "--enrollments", str(cli_chain["enr"]), "--config", str(cli_chain["cfg"])]
    )
    assert rc == 0
    tables = out / "outputs_v2" / "tables"
    main_tbl = pd.read_csv(tables / "table_metrics_main.csv")
    assert {"auc_rows", "brier_ipcw", "ibs", "cindex", "ece"} <= set(main_tbl["metric"])
    sens = pd.read_csv(tables / "table_endpoint_sensitivity.csv")
    assert set(sens["endpoint"]) == {"primary", "composite"}
    assert (sens["censoring_weights"] == "primary_reused").all()


def test_cli_evaluate_composite_needs_enrollments(cli_chain, capsys):
    rc = cli.main(
        ["evaluate", "--model", str(cli_chain["model"]), "--gmodel", str(cli_chain["gmodel"]),
         "--pp", str(cli_chain["pp"]), "--split", str(cli_chain["split"]),
         "--out-dir", str(cli_chain["root"] / "eval2"), "--endpoint", "composite",
         "--config", str(cli_chain["cfg"])]
    )
    assert rc == 2
    assert "enrollments" in capsys.readouterr().err


def test_cli_simulate_policy_and_subgroup(cli_chain):
    out = cli_chain["root"] / "policy"
    rc = cli.main(
        ["simulate-policy", "--model", str(cli_chain["model"]),
         "--gmodel", str(cli_chain["gmodel"]), "--pp", str(cli_chain["pp"]),
         "--split", str(cli_chain["split"]), "--out-dir", str(out),
         "--config", str(cli_chain["cfg"])]
    )
    assert rc == 0
    tables = out / "outputs_v2" / "tables"
    grid = pd.read_csv(tables / "table_rq2_sensitivity_grid.csv")
    assert len(grid) == 216
    curves = out / "curves"
    assert (curves / "baseline.csv").exists()

    sub_out = cli_chain["root"] / "sub"
    rc = cli.main(
        ["subgroup", "--curves-dir", str(curves), "--B", "10",
         "--out-dir", str(sub_out), "--config", str(cli_chain["cfg"])]
    )
    assert rc == 0
    wide = pd.read_csv(sub_out / "outputs_v2" / "tables" / "rq3_policy_bootstrap_wide.csv")
    assert (wide["b_replicates"] == 10).all()


def test_cli_run_all_smoke(tmp_path):
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({"n_enrollments": 120, "seed": 5}))
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"subgroup": {"b_replicates": 10}}))
    out = tmp_path / "run"
    rc = cli.main(
        ["run-all", "--out", str(out), "--synth-spec", str(spec), "--config", str(cfg)]
    )
    assert rc == 0
    manifest = json.loads((out / "outputs_v2" / "manifest.json").read_text())
    assert manifest["data_source"] == "synthetic:seed=5:n=120"
    assert "table_metrics_main.csv" in manifest["tables"]
