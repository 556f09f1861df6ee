"""Command-line entry points for every pipeline stage plus run-all.

Each subcommand accepts --config pointing at a JSON file that overrides the
documented defaults; unknown keys are rejected at startup naming the key.
Tables land under <out-dir>/outputs_v2/tables/ so standalone commands and
run-all share one artifact layout.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np
import pandas as pd

from . import censoring as censoring_mod
from . import ingestion, person_period, pipeline, splitting, subgroup, synth
from .censoring import HorizonSet
from .config import load_config
from .errors import ConfigError, PipelineStageError
from .hazard import HazardModel, survival_from_hazard, survival_grid, train_hazard_model
from .panel import ENROLLMENT_KEY, segment_index, segment_starts


def _tables_dir(out_dir: str | Path) -> Path:
    path = Path(out_dir) / pipeline.TABLES_SUBDIR
    path.mkdir(parents=True, exist_ok=True)
    return path


def _load_panel_split(pp_path: str, split_path: str):
    pp = person_period.read_person_period(pp_path)
    split = splitting.read_split(split_path)
    return pp, split


def cmd_synthesize(args: argparse.Namespace) -> int:
    if args.spec is not None:
        spec = synth.SynthSpec.from_json(args.spec)
    else:
        spec = synth.default_spec()
    result = synth.generate(spec)
    synth.write_tables(result, args.out_dir)
    print(
        f"synthesize: wrote {len(result.tables.student_info)} enrollments "
        f"(seed={spec.seed}) to {args.out_dir}"
    )
    return 0


def cmd_ingest(args: argparse.Namespace) -> int:
    raw = ingestion.load_raw_tables(args.data_dir, extension=args.extension)
    enrollments, report = ingestion.build_backbone(raw)
    ingestion.write_enrollments(enrollments, args.out)
    print(
        f"ingest: {report.n_enrollments} enrollments, {report.n_students} students, "
        f"{report.duplicates_dropped} duplicates dropped -> {args.out}"
    )
    return 0


def cmd_build_person_period(args: argparse.Namespace) -> int:
    enrollments = ingestion.read_enrollments(args.enrollments)
    raw = ingestion.load_raw_tables(args.data_dir, extension=args.extension)
    pp = person_period.build_person_period(enrollments, raw)
    person_period.validate_person_period(pp)
    person_period.write_person_period(pp, args.out)
    print(f"build-person-period: {len(pp)} rows -> {args.out}")
    return 0


def cmd_split(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    pp = person_period.read_person_period(args.pp)
    enr = segment_index(pp, segment_starts(pp))
    holdout = None
    if args.holdout_run is not None:
        parts = args.holdout_run.split(",")
        if len(parts) != 2:
            raise ConfigError("--holdout-run expects 'module,presentation'")
        holdout = (parts[0], parts[1])
    q = args.q if args.q is not None else int(cfg["split"]["q"])
    test_size = args.test_size if args.test_size is not None else float(cfg["split"]["test_size"])
    seed = args.seed if args.seed is not None else int(cfg["master_seed"])
    split, report = splitting.stratified_split(
        enr,
        q=q,
        test_size=test_size,
        seed=seed,
        k_folds=int(cfg["calibration"]["k"]),
        holdout_run=holdout,
    )
    splitting.check_no_overlap(split)
    splitting.write_split(split, args.out)
    print(
        f"split: {report.n_train} train / {report.n_test} test "
        f"(edges={report.edges}) -> {args.out}"
    )
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    pp, split = _load_panel_split(args.pp, args.split)
    pp_train, _, row_folds = pipeline.split_panel(pp, split)
    mdl = cfg["model"]
    model = train_hazard_model(
        pp_train,
        row_folds,
        variant=args.variant,
        lam=float(mdl["lambda"]),
        max_iter=int(mdl["max_iter"]),
        tol=float(mdl["tolerance"]),
    )
    model.save(args.out)
    print(
        f"train: variant={args.variant}, {model.n_iter} Newton steps, "
        f"calibrated={model.calibrated} -> {args.out}"
    )
    return 0


def cmd_censoring(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    pp, split = _load_panel_split(args.pp, args.split)
    pp_train, pp_test, _ = pipeline.split_panel(pp, split)
    mdl = cfg["model"]

    trim = 0
    if args.anchor_variant is not None:
        trim = {"trim1": 1, "trim2": 2}[args.anchor_variant]
    fit_panel = censoring_mod.truncate_censored_histories(pp_train, trim) if trim else pp_train
    folds = splitting.attach_partition(fit_panel, split)["fold"].to_numpy(np.int64)
    gmodel = censoring_mod.fit_censoring(
        fit_panel,
        folds,
        lam=float(mdl["lambda"]),
        max_iter=int(mdl["max_iter"]),
        tol=float(mdl["tolerance"]),
    )
    gmodel.save(args.out)

    anchor = pipeline.stage_anchor(pp_train, pp_test, split, cfg)
    tables_dir = _tables_dir(args.tables_dir if args.tables_dir else Path(args.out).parent)
    pipeline.write_table(anchor, tables_dir / "table_censoring_anchor_sensitivity.csv")
    print(
        f"censoring: anchor variant trim={trim}, degenerate={gmodel.degenerate_no_events} "
        f"-> {args.out}; anchor table -> {tables_dir}"
    )
    return 0


def cmd_evaluate(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    pp, split = _load_panel_split(args.pp, args.split)
    pp_train, pp_test, _ = pipeline.split_panel(pp, split)
    model = HazardModel.load(args.model)
    gmodel = HazardModel.load(args.gmodel)
    bundle = pipeline.build_bundle(model, gmodel, pp_test, cfg)
    tables = pipeline.stage_evaluate(model, gmodel, pp_train, pp_test, bundle, cfg)
    if args.endpoint == "composite":
        if args.enrollments is None:
            raise ConfigError("--endpoint composite requires --enrollments")
        enrollments = ingestion.read_enrollments(args.enrollments)
        tables["table_endpoint_sensitivity.csv"] = pipeline.stage_endpoint(
            enrollments, pp_test, bundle
        )
    tables_dir = _tables_dir(args.out_dir)
    for name, frame in tables.items():
        pipeline.write_table(frame, tables_dir / name)
    print(
        f"evaluate: horizons ({bundle.horizons.t_policy}, {bundle.horizons.t_eval_metrics}, "
        f"{bundle.horizons.t_eval_policy}); {len(tables)} tables -> {tables_dir}"
    )
    return 0


def cmd_simulate_policy(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    pp, split = _load_panel_split(args.pp, args.split)
    _, pp_test, _ = pipeline.split_panel(pp, split)
    model = HazardModel.load(args.model)
    hz_cfg = cfg["horizons"]
    if args.gmodel is not None:
        gmodel = HazardModel.load(args.gmodel)
        bundle = pipeline.build_bundle(model, gmodel, pp_test, cfg)
    else:
        # No censoring model: use the raw support end for the metrics horizon.
        starts = segment_starts(pp_test)
        h0 = model.predict_hazard(pp_test)
        n_weeks = int(hz_cfg["t_eval_policy"]) + 1
        s_rows = survival_from_hazard(h0, starts)
        bundle = pipeline.EvaluationBundle(
            enr_index=segment_index(pp_test, starts),
            starts=starts,
            h0=h0,
            s_rows=s_rows,
            s_grid=survival_grid(s_rows, starts, n_weeks),
            g_rows=np.ones(len(pp_test)),
            g_grid=np.ones((len(starts) - 1, n_weeks)),
            marginal_g=np.ones(n_weeks),
            horizons=HorizonSet(
                t_policy=int(hz_cfg["t_policy"]),
                t_eval_policy=int(hz_cfg["t_eval_policy"]),
                t_eval_metrics=int(hz_cfg["t_eval_policy"]),
                g_min=float(hz_cfg["g_min"]),
                weight_cap=float(hz_cfg["weight_cap"]),
            ),
        )
    tables, runs = pipeline.stage_policy(model, pp_test, bundle, cfg)
    tables_dir = _tables_dir(args.out_dir)
    for name, frame in tables.items():
        pipeline.write_table(frame, tables_dir / name)
    pipeline.write_curves(Path(args.out_dir), pp_test, bundle, runs)
    print(
        f"simulate-policy: {len(runs)} scenarios, "
        f"{len(tables['table_rq2_sensitivity_grid.csv'])} grid points -> {tables_dir}"
    )
    return 0


def _read_curve_grid(path: Path, n_weeks: int) -> tuple[pd.DataFrame, np.ndarray]:
    frame = pd.read_csv(path)
    starts = segment_starts(frame)
    grid = survival_grid(frame["survival"].to_numpy(np.float64), starts, n_weeks)
    return frame, grid


def cmd_subgroup(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    sub = cfg["subgroup"]
    curves_dir = Path(args.curves_dir)
    horizons_frame = pd.read_csv(curves_dir / "horizons.csv")
    t_policy = int(horizons_frame.loc[0, "t_policy"])
    t_eval_metrics = int(horizons_frame.loc[0, "t_eval_metrics"])
    n_weeks = int(horizons_frame.loc[0, "t_eval_policy"]) + 1

    index = pd.read_csv(curves_dir / "index.csv")
    column = args.group if args.group is not None else str(sub["column"])
    if args.map is not None:
        mapping = {}
        for piece in args.map.split(","):
            level, _, value = piece.partition("=")
            mapping[level] = int(value)
    else:
        mapping = {str(k): int(v) for k, v in sub["mapping"].items()}
    g = subgroup.group_indicator(index[column].to_numpy(), mapping)
    orientation = "-".join(
        [
            "/".join(sorted(k for k, v in mapping.items() if v == 1)),
            "minus",
            "/".join(sorted(k for k, v in mapping.items() if v == 0)),
        ]
    )

    baseline_frame, s0_grid = _read_curve_grid(curves_dir / "baseline.csv", n_weeks)
    if not baseline_frame[ENROLLMENT_KEY].drop_duplicates().reset_index(drop=True).equals(
        index[ENROLLMENT_KEY]
    ):
        raise ConfigError("curves index.csv and baseline.csv disagree on enrollment order")

    b = args.B if args.B is not None else int(sub["b_replicates"])
    seed = args.seed if args.seed is not None else int(cfg["master_seed"])
    frames = []
    for path in sorted(curves_dir.glob("scenario_*.csv")):
        scenario_id = path.stem[len("scenario_"):]
        _, s1_grid = _read_curve_grid(path, n_weeks)
        results = subgroup.bootstrap_delta_gap(
            s0_grid,
            s1_grid,
            g,
            [t_policy, t_eval_metrics],
            b_replicates=b,
            seed=seed,
            stratified=bool(sub["stratified"]),
        )
        frame = subgroup.gap_results_frame(results, scenario_id, column, orientation)
        frame["is_reference_scenario"] = scenario_id == sub["reference_scenario"]
        frame["stratified_resampling"] = bool(sub["stratified"])
        frames.append(frame)
    if not frames:
        raise ConfigError(f"no scenario_*.csv curves found in {curves_dir}")
    wide = pd.concat(frames, ignore_index=True)

    tables_dir = _tables_dir(args.out_dir)
    pipeline.write_table(wide, tables_dir / "rq3_policy_bootstrap_wide.csv")
    pipeline.write_table(
        wide[wide["horizon_week"] == t_policy].reset_index(drop=True),
        tables_dir / "rq3_gap_at_policy_horizon.csv",
    )
    pipeline.write_table(
        wide[wide["horizon_week"] == t_eval_metrics].reset_index(drop=True),
        tables_dir / "rq3_gap_at_metrics_horizon.csv",
    )
    print(
        f"subgroup: {len(frames)} scenarios x horizons ({t_policy}, {t_eval_metrics}), "
        f"B={b} -> {tables_dir}"
    )
    return 0


def cmd_run_all(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    spec = None
    if args.synth_spec is not None:
        spec = synth.SynthSpec.from_json(args.synth_spec)
    manifest = pipeline.run_all(
        cfg,
        args.out,
        data_dir=args.data_dir,
        synth_spec=spec,
        progress=print,
    )
    print(f"run-all: manifest lists {len(manifest['tables'])} tables")
    return 0


def _add_config(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", default=None, help="JSON config overriding defaults")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hazardsim",
        description="Temporal dropout pipeline: hazards, policies, subgroup gaps.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synthesize", help="generate a synthetic raw-table cohort")
    p.add_argument("--spec", default=None, help="JSON synthesis spec (default: built-in)")
    p.add_argument("--out-dir", required=True)
    _add_config(p)
    p.set_defaults(func=cmd_synthesize)

    p = sub.add_parser("ingest", help="build the enrollment backbone from raw tables")
    p.add_argument("--data-dir", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--extension", default=".csv")
    _add_config(p)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("build-person-period", help="expand enrollments to weekly rows")
    p.add_argument("--enrollments", required=True)
    p.add_argument("--data-dir", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--extension", default=".csv")
    _add_config(p)
    p.set_defaults(func=cmd_build_person_period)

    p = sub.add_parser("split", help="stratified enrollment-level train/test split")
    p.add_argument("--pp", required=True)
    p.add_argument("--q", type=int, default=None)
    p.add_argument("--test-size", type=float, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--holdout-run", default=None, metavar="MODULE,PRESENTATION")
    p.add_argument("--out", required=True)
    _add_config(p)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("train", help="fit and calibrate the hazard model")
    p.add_argument("--pp", required=True)
    p.add_argument("--split", required=True)
    p.add_argument("--variant", default="full", choices=["full", "no_recency_streak", "no_activity"])
    p.add_argument("--out", required=True)
    _add_config(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("censoring", help="fit the censoring model and anchor sensitivity")
    p.add_argument("--pp", required=True)
    p.add_argument("--split", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--anchor-variant", default=None, choices=["trim1", "trim2"])
    p.add_argument("--tables-dir", default=None, help="where outputs_v2/tables lands")
    _add_config(p)
    p.set_defaults(func=cmd_censoring)

    p = sub.add_parser("evaluate", help="metric tables at both horizons")
    p.add_argument("--model", required=True)
    p.add_argument("--gmodel", required=True)
    p.add_argument("--pp", required=True)
    p.add_argument("--split", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--endpoint", default="primary", choices=["primary", "composite"])
    p.add_argument("--enrollments", default=None, help="needed for --endpoint composite")
    _add_config(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("simulate-policy", help="scenario catalog plus sensitivity grid")
    p.add_argument("--model", required=True)
    p.add_argument("--gmodel", default=None, help="optional; sets the metrics horizon")
    p.add_argument("--pp", required=True)
    p.add_argument("--split", required=True)
    p.add_argument("--out-dir", required=True)
    _add_config(p)
    p.set_defaults(func=cmd_simulate_policy)

    p = sub.add_parser("subgroup", help="bootstrap Gap and DeltaGap from saved curves")
    p.add_argument("--curves-dir", required=True)
    p.add_argument("--group", default=None)
    p.add_argument("--map", default=None, metavar="LEVEL=1,LEVEL=0")
    p.add_argument("--B", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out-dir", required=True)
    _add_config(p)
    p.set_defaults(func=cmd_subgroup)

    p = sub.add_parser("run-all", help="full pipeline with manifest export")
    p.add_argument("--out", required=True)
    p.add_argument("--data-dir", default=None, help="raw tables; omit for synthetic data")
    p.add_argument("--synth-spec", default=None, help="JSON spec for the synthetic cohort")
    _add_config(p)
    p.set_defaults(func=cmd_run_all)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except PipelineStageError as exc:
        print(str(exc), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
