"""End-to-end orchestration and canonical artifact export.

run_all executes ingest, panel construction, split, training, censoring,
evaluation, policy simulation, subgroup analysis, endpoint and anchor
sensitivity, then writes every table under <out>/outputs_v2/tables/ and a
manifest with a sha256 digest per exported file plus the resolved config
snapshot. Identical config and data reproduce identical bytes.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from . import censoring as censoring_mod
from . import ingestion, person_period, policy, splitting, subgroup, synth
from .censoring import HorizonSet
from .config import config_snapshot
from .endpoint import composite_labels, relabel_panel
from .errors import ConfigError, PipelineStageError
from .hazard import HazardModel, survival_from_hazard, survival_grid, train_hazard_model
from .metrics import (
    brier_ipcw,
    by_group_row_metrics,
    concordance_discrete,
    expected_calibration_error,
    horizon_assessment,
    integrated_brier,
    roc_auc,
)
from .panel import ENROLLMENT_KEY, segment_index, segment_starts

TABLES_SUBDIR = Path("outputs_v2") / "tables"

POLICY_TABLE_NAMES = [
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
]


def write_table(df: pd.DataFrame, path: Path) -> None:
    """CSV with fixed column order and 17-significant-digit floats."""
    path.parent.mkdir(parents=True, exist_ok=True)
    df.to_csv(path, index=False, float_format="%.17g")


def sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _stage(name: str, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except PipelineStageError:
        raise
    except Exception as exc:
        raise PipelineStageError(name, exc) from exc


def build_scenarios(cfg: dict) -> list[policy.PolicyScenario]:
    scenarios = []
    for entry in cfg["scenarios"]:
        try:
            scenarios.append(policy.PolicyScenario(**entry))
        except TypeError as exc:
            raise ConfigError(f"invalid scenario entry {entry.get('scenario_id')}: {exc}")
    return scenarios


def split_panel(pp: pd.DataFrame, split: pd.DataFrame):
    """(train panel, test panel, train row folds) with panel order kept."""
    merged = splitting.attach_partition(pp, split)
    train_mask = (merged["partition"] == "train").to_numpy()
    pp_train = pp.loc[train_mask].reset_index(drop=True)
    pp_test = pp.loc[~train_mask].reset_index(drop=True)
    row_folds = merged.loc[train_mask, "fold"].to_numpy(np.int64)
    return pp_train, pp_test, row_folds


@dataclass
class EvaluationBundle:
    """Everything the metric, policy, and subgroup stages share on test."""

    enr_index: pd.DataFrame
    starts: np.ndarray
    h0: np.ndarray
    s_rows: np.ndarray
    s_grid: np.ndarray
    g_rows: np.ndarray
    g_grid: np.ndarray
    marginal_g: np.ndarray
    horizons: HorizonSet


def build_bundle(
    model: HazardModel, gmodel: HazardModel, pp_test: pd.DataFrame, cfg: dict
) -> EvaluationBundle:
    hz = cfg["horizons"]
    n_weeks = int(hz["t_eval_policy"]) + 1
    starts = segment_starts(pp_test)
    enr_index = segment_index(pp_test, starts)
    h0 = model.predict_hazard(pp_test)
    s_rows = survival_from_hazard(h0, starts)
    s_grid = survival_grid(s_rows, starts, n_weeks)
    g_rows = censoring_mod.censoring_survival_rows(gmodel, pp_test)
    g_grid = censoring_mod.censoring_grid(g_rows, starts, n_weeks)
    marginal = censoring_mod.marginal_censoring_curve(g_grid)
    horizons = censoring_mod.build_horizons(
        marginal,
        t_policy=int(hz["t_policy"]),
        t_eval_policy=int(hz["t_eval_policy"]),
        g_min=float(hz["g_min"]),
        weight_cap=float(hz["weight_cap"]),
    )
    return EvaluationBundle(
        enr_index=enr_index,
        starts=starts,
        h0=h0,
        s_rows=s_rows,
        s_grid=s_grid,
        g_rows=g_rows,
        g_grid=g_grid,
        marginal_g=marginal,
        horizons=horizons,
    )


def _horizon_metric_rows(
    label: str,
    enr_index: pd.DataFrame,
    g_grid: np.ndarray,
    s_grid: np.ndarray,
    horizon: int,
    g_min: float,
    cap: float,
) -> list[dict]:
    assess = horizon_assessment(enr_index, g_grid, horizon, g_min, cap)
    p_t = 1.0 - s_grid[:, horizon]
    rows = [
        {
            "metric": "brier_ipcw",
            "partition": "test",
            "horizon": label,
            "horizon_week": horizon,
            "value": brier_ipcw(assess.labels, p_t, assess.weights, "count"),
        },
        {
            "metric": "brier_ipcw_weight_norm",
            "partition": "test",
            "horizon": label,
            "horizon_week": horizon,
            "value": brier_ipcw(assess.labels, p_t, assess.weights, "weight_sum"),
        },
        {
            "metric": "ibs",
            "partition": "test",
            "horizon": label,
            "horizon_week": horizon,
            "value": integrated_brier(enr_index, g_grid, s_grid, horizon, g_min, cap)[0],
        },
        {
            "metric": "cindex",
            "partition": "test",
            "horizon": label,
            "horizon_week": horizon,
            "value": concordance_discrete(enr_index, g_grid, s_grid, horizon, g_min, cap),
        },
        {
            "metric": "n_events_by_horizon",
            "partition": "test",
            "horizon": label,
            "horizon_week": horizon,
            "value": float(assess.n_events),
        },
    ]
    return rows


def stage_evaluate(
    model: HazardModel,
    gmodel: HazardModel,
    pp_train: pd.DataFrame,
    pp_test: pd.DataFrame,
    bundle: EvaluationBundle,
    cfg: dict,
) -> dict[str, pd.DataFrame]:
    hz = bundle.horizons
    ece_bins = int(cfg["metrics"]["ece_bins"])
    h_test = bundle.h0
    y_test = pp_test["event"].to_numpy(np.float64)
    h_train = model.predict_hazard(pp_train)
    y_train = pp_train["event"].to_numpy(np.float64)

    rows = [
        {
            "metric": "auc_rows",
            "partition": "train",
            "horizon": "row_level",
            "horizon_week": -1,
            "value": roc_auc(y_train, h_train),
        },
        {
            "metric": "auc_rows",
            "partition": "test",
            "horizon": "row_level",
            "horizon_week": -1,
            "value": roc_auc(y_test, h_test),
        },
        {
            "metric": "ece",
            "partition": "test",
            "horizon": "row_level",
            "horizon_week": -1,
            "value": expected_calibration_error(h_test, y_test, ece_bins),
        },
    ]
    for label, horizon in (
        ("t_policy", hz.t_policy),
        ("t_eval_metrics", hz.t_eval_metrics),
    ):
        rows.extend(
            _horizon_metric_rows(
                label, bundle.enr_index, bundle.g_grid, bundle.s_grid, horizon, hz.g_min, hz.weight_cap
            )
        )
    metrics_main = pd.DataFrame(rows)

    group_col = str(cfg["subgroup"]["column"])
    by_group = by_group_row_metrics(
        y_test, h_test, pp_test[group_col].to_numpy(), ece_bins
    )
    by_group.insert(0, "group_column", group_col)

    weights_row, floored, capped = censoring_mod.ipcw_row_weights(
        bundle.g_rows, hz.g_min, hz.weight_cap
    )
    marginal = bundle.marginal_g
    censor_curve = pd.DataFrame(
        {"week": np.arange(marginal.size), "g_marginal": marginal}
    )
    censor_diag = pd.DataFrame(
        [
            {
                "t_policy": hz.t_policy,
                "t_eval_policy": hz.t_eval_policy,
                "t_eval_metrics": hz.t_eval_metrics,
                "g_min": hz.g_min,
                "weight_cap": hz.weight_cap,
                "g_marginal_t_policy": float(marginal[hz.t_policy])
                if hz.t_policy < marginal.size
                else float("nan"),
                "capped_row_share": float(capped.mean()),
                "floored_row_share": float(floored.mean()),
                "mean_row_weight": float(weights_row.mean()),
                "censoring_degenerate": bool(gmodel.degenerate_no_events),
            }
        ]
    )
    return {
        "table_metrics_main.csv": metrics_main,
        "table_metrics_by_group.csv": by_group,
        "table_censoring_marginal_curve.csv": censor_curve,
        "table_censoring_diagnostics.csv": censor_diag,
    }


def stage_endpoint(
    enrollments: pd.DataFrame,
    pp_test: pd.DataFrame,
    bundle: EvaluationBundle,
) -> pd.DataFrame:
    """Primary-vs-composite metric rows; weights and scores reused as-is."""
    hz = bundle.horizons
    test_keys = bundle.enr_index[ENROLLMENT_KEY]
    comp = composite_labels(enrollments).merge(test_keys, on=ENROLLMENT_KEY, how="inner")

    rows = []
    for endpoint_name, enr_idx, panel in (
        ("primary", bundle.enr_index, pp_test),
        (
            "composite",
            bundle.enr_index.drop(columns=["event_observed", "event_week"]).merge(
                comp[ENROLLMENT_KEY + ["event_observed", "event_week"]],
                on=ENROLLMENT_KEY,
                how="left",
            ),
            relabel_panel(pp_test, comp),
        ),
    ):
        y_rows = panel["event"].to_numpy(np.float64)
        auc = roc_auc(y_rows, bundle.h0)
        n_events = int(enr_idx["event_observed"].sum())
        for label, horizon in (
            ("t_policy", hz.t_policy),
            ("t_eval_metrics", hz.t_eval_metrics),
        ):
            assess = horizon_assessment(enr_idx, bundle.g_grid, horizon, hz.g_min, hz.weight_cap)
            p_t = 1.0 - bundle.s_grid[:, horizon]
            rows.append(
                {
                    "endpoint": endpoint_name,
                    "horizon": label,
                    "horizon_week": horizon,
                    "n_events_test": n_events,
                    "auc_rows": auc,
                    "cindex": concordance_discrete(
                        enr_idx, bundle.g_grid, bundle.s_grid, horizon, hz.g_min, hz.weight_cap
                    ),
                    "brier_ipcw": brier_ipcw(assess.labels, p_t, assess.weights, "count"),
                    "brier_ipcw_weight_norm": brier_ipcw(
                        assess.labels, p_t, assess.weights, "weight_sum"
                    ),
                    "ibs": integrated_brier(
                        enr_idx, bundle.g_grid, bundle.s_grid, horizon, hz.g_min, hz.weight_cap
                    )[0],
                    "censoring_weights": "primary_reused",
                }
            )
    return pd.DataFrame(rows)


def stage_ablation(
    pp_train: pd.DataFrame,
    pp_test: pd.DataFrame,
    row_folds: np.ndarray,
    bundle: EvaluationBundle,
    cfg: dict,
    full_model: HazardModel,
) -> pd.DataFrame:
    hz = bundle.horizons
    mdl_cfg = cfg["model"]
    rows = []
    for variant in cfg["ablation"]["variants"]:
        if variant == full_model.variant:
            model = full_model
        else:
            model = train_hazard_model(
                pp_train,
                row_folds,
                variant=variant,
                lam=float(mdl_cfg["lambda"]),
                max_iter=int(mdl_cfg["max_iter"]),
                tol=float(mdl_cfg["tolerance"]),
            )
        h = model.predict_hazard(pp_test)
        s_grid = survival_grid(
            survival_from_hazard(h, bundle.starts), bundle.starts, hz.t_eval_policy + 1
        )
        assess = horizon_assessment(
            bundle.enr_index, bundle.g_grid, hz.t_eval_metrics, hz.g_min, hz.weight_cap
        )
        p_t = 1.0 - s_grid[:, hz.t_eval_metrics]
        rows.append(
            {
                "variant": variant,
                "auc_rows_test": roc_auc(pp_test["event"].to_numpy(np.float64), h),
                "cindex_t_eval_metrics": concordance_discrete(
                    bundle.enr_index, bundle.g_grid, s_grid, hz.t_eval_metrics, hz.g_min, hz.weight_cap
                ),
                "brier_ipcw_t_eval_metrics": brier_ipcw(
                    assess.labels, p_t, assess.weights, "count"
                ),
                "ibs_t_eval_metrics": integrated_brier(
                    bundle.enr_index, bundle.g_grid, s_grid, hz.t_eval_metrics, hz.g_min, hz.weight_cap
                )[0],
            }
        )
    return pd.DataFrame(rows)


def stage_anchor(
    pp_train: pd.DataFrame,
    pp_test: pd.DataFrame,
    split: pd.DataFrame,
    cfg: dict,
) -> pd.DataFrame:
    """Censoring-anchor sensitivity: trim censored histories and refit G."""
    hz = cfg["horizons"]
    mdl_cfg = cfg["model"]
    trims = [0] + [int(t) for t in cfg["censoring"]["anchor_trims"] if int(t) != 0]
    rows = []
    for trim in trims:
        variant = "last_obs" if trim == 0 else f"last_obs_minus_{trim}"
        tr = censoring_mod.truncate_censored_histories(pp_train, trim)
        te = censoring_mod.truncate_censored_histories(pp_test, trim)
        folds = splitting.attach_partition(tr, split)["fold"].to_numpy(np.int64)
        gmodel = censoring_mod.fit_censoring(
            tr,
            folds,
            lam=float(mdl_cfg["lambda"]),
            max_iter=int(mdl_cfg["max_iter"]),
            tol=float(mdl_cfg["tolerance"]),
        )
        labels = censoring_mod.censor_labels(te)
        hazard = gmodel.predict_hazard(te)
        try:
            auc = roc_auc(labels.astype(np.float64), hazard)
        except Exception:
            auc = float("nan")
        starts = segment_starts(te)
        g_rows = censoring_mod.censoring_survival_rows(gmodel, te)
        _, floored, capped = censoring_mod.ipcw_row_weights(
            g_rows, float(hz["g_min"]), float(hz["weight_cap"])
        )
        g_grid = censoring_mod.censoring_grid(g_rows, starts, int(hz["t_eval_policy"]) + 1)
        marginal = censoring_mod.marginal_censoring_curve(g_grid)
        rows.append(
            {
                "variant": variant,
                "trim_weeks": trim,
                "censor_auc_test": auc,
                "capped_row_share": float(capped.mean()),
                "floored_row_share": float(floored.mean()),
                "g_marginal_t_policy": float(marginal[int(hz["t_policy"])])
                if int(hz["t_policy"]) < marginal.size
                else float("nan"),
                "t_eval_metrics": censoring_mod.metrics_horizon(marginal, float(hz["g_min"])),
            }
        )
    return pd.DataFrame(rows)


def stage_policy(
    model: HazardModel,
    pp_test: pd.DataFrame,
    bundle: EvaluationBundle,
    cfg: dict,
) -> tuple[dict[str, pd.DataFrame], dict[str, policy.ScenarioRun]]:
    hz = bundle.horizons
    scenarios = build_scenarios(cfg)
    runs: dict[str, policy.ScenarioRun] = {}
    spec_rows, main_rows, param_rows, weekly_frames = [], [], [], []
    horizon_rows, activation_rows, overwrite_rows, mech_spec_rows, check_rows = [], [], [], [], []

    for scenario in scenarios:
        run = policy.run_scenario(model, pp_test, bundle.h0, scenario, hz)
        runs[scenario.scenario_id] = run
        spec_rows.append(run.scenario.to_dict())
        for param, value in run.scenario.to_dict().items():
            if param == "scenario_id":
                continue
            param_rows.append(
                {"scenario_id": scenario.scenario_id, "param": param, "value": str(value)}
            )
        weekly = run.contrast.to_frame()
        weekly.insert(0, "scenario_id", scenario.scenario_id)
        weekly_frames.append(weekly)
        main_rows.append(
            {
                "scenario_id": scenario.scenario_id,
                "branch": scenario.branch,
                "status": scenario.status,
                "n_triggered": run.activation.n_triggered,
                "n_active_rows": run.activation.n_active_rows,
                "ds_t_policy": run.contrast.delta_at_policy,
                "ds_t_eval_policy": run.contrast.delta_at_eval,
            }
        )
        for label, horizon in (("t_policy", hz.t_policy), ("t_eval_policy", hz.t_eval_policy)):
            horizon_rows.append(
                {
                    "scenario_id": scenario.scenario_id,
                    "horizon": label,
                    "horizon_week": horizon,
                    "delta_survival": float(run.contrast.delta_survival[horizon]),
                }
            )
        activation_rows.append(
            {
                "scenario_id": scenario.scenario_id,
                "n_enrollments": len(bundle.enr_index),
                "n_triggered": run.activation.n_triggered,
                "share_triggered": run.activation.n_triggered / max(len(bundle.enr_index), 1),
                "n_windows": run.activation.n_windows,
                "n_active_rows": run.activation.n_active_rows,
                "n_event_rows_excluded": run.activation.n_event_rows_excluded,
            }
        )
        if scenario.branch == "mechanism_aware":
            diag = run.mech_diagnostics
            overwrite_rows.append(
                {
                    "scenario_id": scenario.scenario_id,
                    "n_rows_modified": diag.n_rows_modified,
                    "share_rows_modified": diag.share_rows_modified,
                    "n_clicks_changed": diag.n_clicks_changed,
                    "mean_click_delta": diag.mean_click_delta,
                    "n_active_changed": diag.n_active_changed,
                    "n_recency_changed": diag.n_recency_changed,
                    "n_streak_changed": diag.n_streak_changed,
                    "mean_hazard_delta_modified_rows": diag.mean_hazard_delta,
                }
            )
            mech_spec_rows.append(
                {
                    "scenario_id": scenario.scenario_id,
                    "operator_mode": "clicks_plus_stateful_recency_streak",
                    "decay_type": scenario.decay_type,
                    "alpha_week0": scenario.alpha_week0,
                    "alpha_week1": scenario.alpha_week1,
                    "fractional_clicks_kept": True,
                    "submitted_this_week_modified": False,
                }
            )
            null_scenario = policy.PolicyScenario(
                scenario_id=f"{scenario.scenario_id}__alpha_zero",
                branch="mechanism_aware",
                status=scenario.status,
                r_star=scenario.r_star,
                window_weeks=scenario.window_weeks,
                alpha_week0=0.0,
                alpha_week1=0.0,
                decay_type=scenario.decay_type,
                window_exclusive_upper=scenario.window_exclusive_upper,
                allow_retrigger=scenario.allow_retrigger,
            )
            h_null, _ = policy.mechanism_hazards(
                model, pp_test, bundle.h0, run.activation, null_scenario
            )
            check_rows.append(
                {
                    "scenario_id": scenario.scenario_id,
                    "n_event_rows_modified": diag.n_event_rows_modified,
                    "n_rows_past_support_modified": diag.n_rows_past_support_modified,
                    "alpha_zero_max_abs_hazard_delta": float(
                        np.abs(h_null - bundle.h0).max()
                    ),
                    "alpha_zero_reproduces_baseline": bool(np.array_equal(h_null, bundle.h0)),
                }
            )

    shock_deltas = [
        (run.scenario.delta_shock, run.contrast.delta_at_policy)
        for run in runs.values()
        if run.scenario.branch == "shock"
    ]
    shock_deltas.sort()
    monotone = all(
        shock_deltas[i][1] <= shock_deltas[i + 1][1] + 1e-15
        for i in range(len(shock_deltas) - 1)
    )

    grid = policy.sensitivity_grid(model, pp_test, bundle.h0, hz, cfg["grid"])

    tables = {
        "table_policy_spec.csv": pd.DataFrame(spec_rows),
        "table_policy_scenarios_main.csv": pd.DataFrame(main_rows),
        "table_policy_scenario_params.csv": pd.DataFrame(param_rows),
        "table_policy_deltaS_by_week_by_scenario.csv": pd.concat(
            weekly_frames, ignore_index=True
        ),
        "table_policy_deltaS_at_horizons_by_scenario.csv": pd.DataFrame(horizon_rows),
        "table_policy_horizons_dual.csv": pd.DataFrame(
            [
                {
                    "t_policy": hz.t_policy,
                    "t_eval_policy": hz.t_eval_policy,
                    "t_eval_metrics": hz.t_eval_metrics,
                    "g_min": hz.g_min,
                    "weight_cap": hz.weight_cap,
                    "tail_convention": "locf_fixed_denominator",
                    "shock_monotone_in_delta": monotone,
                }
            ]
        ),
        "table_policy_mech_operator_spec.csv": pd.DataFrame(mech_spec_rows),
        "table_policy_activation_summary.csv": pd.DataFrame(activation_rows),
        "table_policy_covariate_overwrites.csv": pd.DataFrame(overwrite_rows),
        "table_policy_covariate_propagation_checks.csv": pd.DataFrame(check_rows),
        "table_rq2_sensitivity_grid.csv": grid,
    }
    return tables, runs


def stage_subgroup(
    pp_test: pd.DataFrame,
    bundle: EvaluationBundle,
    runs: dict[str, policy.ScenarioRun],
    cfg: dict,
) -> dict[str, pd.DataFrame]:
    sub = cfg["subgroup"]
    hz = bundle.horizons
    column = str(sub["column"])
    mapping = {str(k): int(v) for k, v in sub["mapping"].items()}
    firsts = bundle.starts[:-1]
    group_values = pp_test[column].to_numpy()[firsts]
    g = subgroup.group_indicator(group_values, mapping)
    orientation = "-".join(
        [
            "/".join(sorted(k for k, v in mapping.items() if v == 1)),
            "minus",
            "/".join(sorted(k for k, v in mapping.items() if v == 0)),
        ]
    )
    horizons = [hz.t_policy, hz.t_eval_metrics]

    frames = []
    for scenario_id, run in runs.items():
        s1_grid = survival_grid(
            survival_from_hazard(run.regime_hazards, bundle.starts),
            bundle.starts,
            hz.t_eval_policy + 1,
        )
        results = subgroup.bootstrap_delta_gap(
            bundle.s_grid,
            s1_grid,
            g,
            horizons,
            b_replicates=int(sub["b_replicates"]),
            seed=int(cfg["master_seed"]),
            stratified=bool(sub["stratified"]),
        )
        frame = subgroup.gap_results_frame(results, scenario_id, column, orientation)
        frame["is_reference_scenario"] = scenario_id == sub["reference_scenario"]
        frame["stratified_resampling"] = bool(sub["stratified"])
        frames.append(frame)
    wide = pd.concat(frames, ignore_index=True)
    return {
        "rq3_policy_bootstrap_wide.csv": wide,
        "rq3_gap_at_policy_horizon.csv": wide[wide["horizon_week"] == hz.t_policy].reset_index(
            drop=True
        ),
        "rq3_gap_at_metrics_horizon.csv": wide[
            wide["horizon_week"] == hz.t_eval_metrics
        ].reset_index(drop=True),
    }


def write_curves(
    out_dir: Path,
    pp_test: pd.DataFrame,
    bundle: EvaluationBundle,
    runs: dict[str, policy.ScenarioRun],
) -> list[Path]:
    """Per-enrollment hazard/survival curves consumed by the subgroup CLI."""
    from .ingestion import STATIC_CATEGORICAL, STATIC_NUMERIC

    curves_dir = out_dir / "curves"
    curves_dir.mkdir(parents=True, exist_ok=True)
    written = []

    firsts = bundle.starts[:-1]
    index = bundle.enr_index[ENROLLMENT_KEY + ["final_week", "event_observed", "event_week"]].copy()
    for col in STATIC_CATEGORICAL + STATIC_NUMERIC:
        index[col] = pp_test[col].to_numpy()[firsts]
    path = curves_dir / "index.csv"
    write_table(index, path)
    written.append(path)

    hz = bundle.horizons
    horizons = pd.DataFrame(
        [
            {
                "t_policy": hz.t_policy,
                "t_eval_policy": hz.t_eval_policy,
                "t_eval_metrics": hz.t_eval_metrics,
                "g_min": hz.g_min,
                "weight_cap": hz.weight_cap,
            }
        ]
    )
    path = curves_dir / "horizons.csv"
    write_table(horizons, path)
    written.append(path)

    base = pp_test[ENROLLMENT_KEY + ["week"]].copy()
    base["hazard"] = bundle.h0
    base["survival"] = bundle.s_rows
    path = curves_dir / "baseline.csv"
    write_table(base, path)
    written.append(path)

    for scenario_id, run in runs.items():
        frame = pp_test[ENROLLMENT_KEY + ["week"]].copy()
        frame["hazard"] = run.regime_hazards
        frame["survival"] = survival_from_hazard(run.regime_hazards, bundle.starts)
        path = curves_dir / f"scenario_{scenario_id}.csv"
        write_table(frame, path)
        written.append(path)
    return written


def cohort_summary(
    enrollments: pd.DataFrame, pp: pd.DataFrame, report: ingestion.IngestReport
) -> pd.DataFrame:
    return pd.DataFrame(
        [
            {
                "n_enrollments": len(enrollments),
                "n_students": int(enrollments["id_student"].nunique()),
                "n_person_period_rows": len(pp),
                "n_event_enrollments": int(enrollments["event_observed"].sum()),
                "duplicates_dropped": report.duplicates_dropped,
                "withdrawn_without_date": report.withdrawn_without_date,
                "orphan_rows_registrations": report.orphan_rows.get("registrations", 0),
                "orphan_rows_vle_clicks": report.orphan_rows.get("vle_clicks", 0),
                "orphan_rows_assessments": report.orphan_rows.get("assessments", 0),
                "missing_static_values": report.missing_static_values,
            }
        ]
    )


def split_summary(
    split: pd.DataFrame, pp: pd.DataFrame, report: splitting.SplitReport
) -> pd.DataFrame:
    merged = splitting.attach_partition(pp, split)
    rows = []
    for partition in ("train", "test"):
        part = split[split["partition"] == partition]
        rows.append(
            {
                "partition": partition,
                "n_enrollments": len(part),
                "n_event_enrollments": int(part["stratum_event"].sum()),
                "n_rows": int((merged["partition"] == partition).sum()),
                "bucket_edges": json.dumps(report.edges),
                "n_strata": report.n_strata,
                "singleton_strata": report.singleton_strata,
            }
        )
    return pd.DataFrame(rows)


def run_all(
    cfg: dict,
    out_dir: str | Path,
    data_dir: str | Path | None = None,
    synth_spec: synth.SynthSpec | None = None,
    progress=None,
) -> dict:
    """Execute the whole pipeline and export the canonical artifact package."""

    def log(msg: str) -> None:
        if progress is not None:
            progress(msg)

    out_dir = Path(out_dir)
    tables_dir = out_dir / TABLES_SUBDIR
    tables_dir.mkdir(parents=True, exist_ok=True)
    seed = int(cfg["master_seed"])

    if data_dir is not None:
        log(f"ingest: loading raw tables from {data_dir}")
        raw = _stage("ingest", ingestion.load_raw_tables, data_dir)
        data_source = Path(data_dir).name
    else:
        spec = synth_spec if synth_spec is not None else synth.default_spec()
        log(f"ingest: generating synthetic cohort (n={spec.n_enrollments}, seed={spec.seed})")
        raw = _stage("ingest", lambda: synth.generate(spec).tables)
        data_source = f"synthetic:seed={spec.seed}:n={spec.n_enrollments}"

    enrollments, ingest_report = _stage("ingest", ingestion.build_backbone, raw)
    ingestion.write_enrollments(enrollments, out_dir / "enrollments.csv")
    log(f"ingest: {len(enrollments)} enrollments, {ingest_report.n_students} students")

    pp = _stage("person_period", person_period.build_person_period, enrollments, raw)
    person_period.write_person_period(pp, out_dir / "person_period.csv")
    log(f"person_period: {len(pp)} rows")

    sp_cfg = cfg["split"]
    holdout = None
    if sp_cfg["holdout_module"] is not None:
        holdout = (str(sp_cfg["holdout_module"]), str(sp_cfg["holdout_presentation"]))
    split, split_report = _stage(
        "split",
        stratified_split_checked,
        enrollments,
        q=int(sp_cfg["q"]),
        test_size=float(sp_cfg["test_size"]),
        seed=seed,
        k_folds=int(cfg["calibration"]["k"]),
        holdout_run=holdout,
    )
    splitting.write_split(split, out_dir / "split.csv")
    log(f"split: {split_report.n_train} train / {split_report.n_test} test enrollments")

    pp_train, pp_test, row_folds = _stage("split", split_panel, pp, split)

    mdl_cfg = cfg["model"]
    log("train: fitting hazard model (full variant)")
    model = _stage(
        "train",
        train_hazard_model,
        pp_train,
        row_folds,
        variant="full",
        lam=float(mdl_cfg["lambda"]),
        max_iter=int(mdl_cfg["max_iter"]),
        tol=float(mdl_cfg["tolerance"]),
    )
    model.save(out_dir / "model.json")

    log("censoring: fitting censoring model")
    gmodel = _stage(
        "censoring",
        censoring_mod.fit_censoring,
        pp_train,
        row_folds,
        lam=float(mdl_cfg["lambda"]),
        max_iter=int(mdl_cfg["max_iter"]),
        tol=float(mdl_cfg["tolerance"]),
    )
    gmodel.save(out_dir / "gmodel.json")

    bundle = _stage("evaluate", build_bundle, model, gmodel, pp_test, cfg)
    log(
        "evaluate: horizons "
        f"t_policy={bundle.horizons.t_policy}, "
        f"t_eval_metrics={bundle.horizons.t_eval_metrics}, "
        f"t_eval_policy={bundle.horizons.t_eval_policy}"
    )
    tables: dict[str, pd.DataFrame] = {}
    tables["table_cohort_summary.csv"] = cohort_summary(enrollments, pp, ingest_report)
    tables["table_split_summary.csv"] = split_summary(split, pp, split_report)
    tables.update(_stage("evaluate", stage_evaluate, model, gmodel, pp_train, pp_test, bundle, cfg))

    if cfg["endpoint"]["composite"]:
        tables["table_endpoint_sensitivity.csv"] = _stage(
            "endpoint", stage_endpoint, enrollments, pp_test, bundle
        )

    log("evaluate: ablation variants")
    tables["table_model_ablation.csv"] = _stage(
        "evaluate", stage_ablation, pp_train, pp_test, row_folds, bundle, cfg, model
    )

    log("censoring: anchor sensitivity")
    tables["table_censoring_anchor_sensitivity.csv"] = _stage(
        "censoring", stage_anchor, pp_train, pp_test, split, cfg
    )

    log("policy: scenario catalog and sensitivity grid")
    policy_tables, runs = _stage("policy", stage_policy, model, pp_test, bundle, cfg)
    tables.update(policy_tables)

    log("subgroup: bootstrap gap analysis")
    tables.update(_stage("subgroup", stage_subgroup, pp_test, bundle, runs, cfg))

    for name, frame in tables.items():
        write_table(frame, tables_dir / name)
    curve_files = _stage("export", write_curves, out_dir, pp_test, bundle, runs)

    manifest = {
        "artifact_format": 1,
        "data_source": data_source,
        "config": json.loads(config_snapshot(cfg)),
        "tables": {name: sha256_file(tables_dir / name) for name in sorted(tables)},
        "files": {
            str(p.relative_to(out_dir)): sha256_file(p)
            for p in sorted(
                [
                    out_dir / "enrollments.csv",
                    out_dir / "person_period.csv",
                    out_dir / "split.csv",
                    out_dir / "model.json",
                    out_dir / "gmodel.json",
                    *curve_files,
                ]
            )
        },
    }
    manifest_path = out_dir / "outputs_v2" / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, sort_keys=True, indent=1) + "\n")
    log(f"export: {len(tables)} tables + manifest under {out_dir / 'outputs_v2'}")
    return manifest


def stratified_split_checked(enrollments, **kwargs):
    split, report = splitting.stratified_split(enrollments, **kwargs)
    splitting.check_no_overlap(split)
    return split, report
