"""Shared fixtures: a hand-built raw cohort and a fitted synthetic pipeline."""

from __future__ import annotations

import numpy as np
import pandas as pd
import pytest

from hazardsim import censoring as censoring_mod
from hazardsim import ingestion, person_period, pipeline, splitting, synth
from hazardsim.config import load_config
from hazardsim.hazard import train_hazard_model


def make_raw(
    info_rows: list[dict],
    reg_rows: list[dict],
    vle_rows: list[dict] | None = None,
    assess_rows: list[dict] | None = None,
) -> ingestion.RawTables:
    """RawTables from row dicts, with empty frames given proper columns."""
    vle_cols = ["id_student", "code_module", "code_presentation", "date", "sum_click"]
    assess_cols = ["id_student", "code_module", "code_presentation", "date_submitted"]
    vle = pd.DataFrame(vle_rows or [], columns=vle_cols)
    assess = pd.DataFrame(assess_rows or [], columns=assess_cols)
    raw = ingestion.RawTables(
        student_info=pd.DataFrame(info_rows),
        registrations=pd.DataFrame(reg_rows),
        vle_clicks=vle,
        assessments=assess,
    )
    ingestion.validate_raw(raw)
    return raw


def info_row(student=1, module="AAA", pres="2013J", result="Pass", **overrides):
    row = {
        "id_student": student,
        "code_module": module,
        "code_presentation": pres,
        "gender": "M",
        "highest_education": "A Level or Equivalent",
        "age_band": "0-35",
        "num_of_prev_attempts": 0,
        "studied_credits": 60,
        "final_result": result,
    }
    row.update(overrides)
    return row


def reg_row(student=1, module="AAA", pres="2013J", unreg=None):
    return {
        "id_student": student,
        "code_module": module,
        "code_presentation": pres,
        "date_registration": -10,
        "date_unregistration": unreg,
    }


def vle_row(student=1, module="AAA", pres="2013J", date=0, clicks=1):
    return {
        "id_student": student,
        "code_module": module,
        "code_presentation": pres,
        "date": date,
        "sum_click": clicks,
    }


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """Print one verdict line per acceptance criterion after the test run."""
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def small_config():
    cfg = load_config(None)
    cfg["subgroup"]["b_replicates"] = 25
    return cfg


@pytest.fixture(scope="session")
def fitted_cohort(small_config):
    """400-enrollment synthetic cohort taken through train + censoring."""
    spec = synth.default_spec()
    raw = synth.generate(spec).tables
    enrollments, _ = ingestion.build_backbone(raw)
    pp = person_period.build_person_period(enrollments, raw)
    split, _ = splitting.stratified_split(enrollments, seed=42)
    pp_train, pp_test, row_folds = pipeline.split_panel(pp, split)
    model = train_hazard_model(pp_train, row_folds)
    gmodel = censoring_mod.fit_censoring(pp_train, row_folds)
    bundle = pipeline.build_bundle(model, gmodel, pp_test, small_config)
    return {
        "spec": spec,
        "raw": raw,
        "enrollments": enrollments,
        "pp": pp,
        "split": split,
        "pp_train": pp_train,
        "pp_test": pp_test,
        "row_folds": row_folds,
        "model": model,
        "gmodel": gmodel,
        "bundle": bundle,
    }
