"""Raw table loading and enrollment backbone construction.

The backbone has exactly one row per (id_student, code_module,
code_presentation) enrollment, carrying the derived endpoint and the static
covariates used downstream. The endpoint rule: an enrollment is an observed
event only when final_result is Withdrawn AND the unregistration date is a
valid integer day; everything else (including Withdrawn with a missing date)
is censored at its last active week.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from .errors import EmptyInputError, SchemaError
from .panel import ENROLLMENT_KEY, week_of_day

STATIC_CATEGORICAL = ["gender", "highest_education", "age_band"]
STATIC_NUMERIC = ["num_of_prev_attempts", "studied_credits"]

ENROLLMENT_COLUMNS = ENROLLMENT_KEY + [
    "event_observed",
    "event_week",
    "last_active_week",
    "final_week",
    "final_result",
    *STATIC_CATEGORICAL,
    *STATIC_NUMERIC,
]

TABLE_STEMS = {
    "student_info": "studentInfo",
    "registrations": "studentRegistration",
    "vle_clicks": "studentVle",
    "assessments": "studentAssessment",
}

REQUIRED_COLUMNS = {
    "student_info": ENROLLMENT_KEY
    + [*STATIC_CATEGORICAL, *STATIC_NUMERIC, "final_result"],
    "registrations": ENROLLMENT_KEY + ["date_registration", "date_unregistration"],
    "vle_clicks": ENROLLMENT_KEY + ["date", "sum_click"],
    "assessments": ENROLLMENT_KEY + ["date_submitted"],
}

_DATE_COLUMNS = {
    "registrations": ["date_registration", "date_unregistration"],
    "vle_clicks": ["date"],
    "assessments": ["date_submitted"],
}


@dataclass
class RawTables:
    student_info: pd.DataFrame
    registrations: pd.DataFrame
    vle_clicks: pd.DataFrame
    assessments: pd.DataFrame


@dataclass
class IngestReport:
    n_enrollments: int = 0
    n_students: int = 0
    duplicates_dropped: int = 0
    withdrawn_without_date: int = 0
    orphan_rows: dict = field(default_factory=dict)
    missing_static_values: int = 0


def _require_columns(df: pd.DataFrame, columns: list[str], table: str) -> None:
    for col in columns:
        if col not in df.columns:
            raise SchemaError(f"table '{table}' is missing required column '{col}'")


def _coerce_integer(df: pd.DataFrame, col: str, table: str, allow_na: bool) -> None:
    """Coerce a day-offset column to nullable integers, in place."""
    coerced = pd.to_numeric(df[col], errors="coerce")
    bad = coerced.isna() & df[col].notna()
    if bad.any():
        raise SchemaError(f"table '{table}' column '{col}' has non-numeric values")
    fractional = coerced.notna() & (np.mod(coerced.fillna(0), 1) != 0)
    if fractional.any():
        raise SchemaError(f"table '{table}' column '{col}' has non-integer values")
    if not allow_na and coerced.isna().any():
        raise SchemaError(f"table '{table}' column '{col}' has missing values")
    df[col] = coerced.astype("Int64")


def load_raw_tables(data_dir: str | Path, extension: str = ".csv") -> RawTables:
    """Read the four raw tables from `data_dir` and validate their schemas.

    studentAssessment rows usually carry only id_student + id_assessment;
    when the enrollment key columns are absent an `assessments` catalog file
    (id_assessment -> code_module, code_presentation) must be present to
    complete them.
    """
    data_dir = Path(data_dir)
    frames: dict[str, pd.DataFrame] = {}
    for name, stem in TABLE_STEMS.items():
        path = data_dir / f"{stem}{extension}"
        if not path.exists():
            raise SchemaError(f"missing input file '{path}' for table '{name}'")
        frames[name] = pd.read_csv(path)

    assess = frames["assessments"]
    missing_key = [c for c in ("code_module", "code_presentation") if c not in assess.columns]
    if missing_key:
        catalog_path = data_dir / f"assessments{extension}"
        if "id_assessment" in assess.columns and catalog_path.exists():
            catalog = pd.read_csv(catalog_path)
            _require_columns(
                catalog, ["id_assessment", "code_module", "code_presentation"], "assessments catalog"
            )
            assess = assess.merge(
                catalog[["id_assessment", "code_module", "code_presentation"]],
                on="id_assessment",
                how="left",
            )
            frames["assessments"] = assess
        else:
            raise SchemaError(
                "table 'assessments' is missing required column "
                f"'{missing_key[0]}' and no assessments catalog file is available"
            )

    for name, df in frames.items():
        _require_columns(df, REQUIRED_COLUMNS[name], name)

    raw = RawTables(**frames)
    validate_raw(raw)
    return raw


def validate_raw(raw: RawTables) -> None:
    """Type and value checks shared by the file loader and in-memory callers."""
    if len(raw.student_info) == 0:
        raise EmptyInputError("student_info has no rows; nothing to ingest")
    for name, df in (
        ("registrations", raw.registrations),
        ("vle_clicks", raw.vle_clicks),
        ("assessments", raw.assessments),
    ):
        _require_columns(df, REQUIRED_COLUMNS[name], name)
        for col in _DATE_COLUMNS[name]:
            # unregistration may be missing; activity and submission dates may not
            allow_na = col == "date_unregistration"
            _coerce_integer(df, col, name, allow_na=allow_na)
    _require_columns(raw.student_info, REQUIRED_COLUMNS["student_info"], "student_info")
    clicks = pd.to_numeric(raw.vle_clicks["sum_click"], errors="coerce")
    if clicks.isna().any():
        raise SchemaError("table 'vle_clicks' column 'sum_click' has non-numeric values")
    if (clicks < 0).any():
        raise SchemaError("table 'vle_clicks' column 'sum_click' has negative values")
    raw.vle_clicks["sum_click"] = clicks.astype(np.int64)


def _orphan_count(df: pd.DataFrame, backbone_keys: pd.DataFrame) -> int:
    merged = df[ENROLLMENT_KEY].merge(backbone_keys, on=ENROLLMENT_KEY, how="left", indicator=True)
    return int((merged["_merge"] == "left_only").sum())


def build_backbone(raw: RawTables) -> tuple[pd.DataFrame, IngestReport]:
    """Deduplicate enrollments and derive the endpoint for each one.

    Duplicate keys keep the first occurrence in file order. Missing static
    categoricals become the literal level "unknown"; missing static numerics
    become 0. Rows in the other tables whose key has no backbone row are
    counted as orphans and ignored.
    """
    report = IngestReport()
    info = raw.student_info.copy()
    before = len(info)
    info = info.drop_duplicates(subset=ENROLLMENT_KEY, keep="first").reset_index(drop=True)
    report.duplicates_dropped = before - len(info)

    backbone = info[ENROLLMENT_KEY].copy()
    for name, df in (
        ("registrations", raw.registrations),
        ("vle_clicks", raw.vle_clicks),
        ("assessments", raw.assessments),
    ):
        report.orphan_rows[name] = _orphan_count(df, backbone)

    for col in STATIC_CATEGORICAL:
        vals = info[col].astype("string")
        missing = vals.isna() | (vals.str.strip() == "")
        report.missing_static_values += int(missing.sum())
        info[col] = vals.mask(missing, "unknown").astype(str)
    for col in STATIC_NUMERIC:
        vals = pd.to_numeric(info[col], errors="coerce")
        report.missing_static_values += int(vals.isna().sum())
        info[col] = vals.fillna(0).astype(np.float64)

    reg = raw.registrations.drop_duplicates(subset=ENROLLMENT_KEY, keep="first")
    info = info.merge(
        reg[ENROLLMENT_KEY + ["date_unregistration"]], on=ENROLLMENT_KEY, how="left"
    )

    unreg = info["date_unregistration"]
    has_date = unreg.notna().to_numpy()
    withdrawn = (info["final_result"].astype(str) == "Withdrawn").to_numpy()
    event = withdrawn & has_date
    report.withdrawn_without_date = int((withdrawn & ~has_date).sum())

    # last active week: max clamped week with positive clicks, default 0
    vle = raw.vle_clicks.merge(backbone, on=ENROLLMENT_KEY, how="inner")
    active = vle[vle["sum_click"] > 0].copy()
    if len(active):
        active["week"] = week_of_day(active["date"].to_numpy(np.int64))
        last = active.groupby(ENROLLMENT_KEY, sort=False)["week"].max().rename("last_active_week")
        info = info.merge(last, on=ENROLLMENT_KEY, how="left")
    else:
        info["last_active_week"] = np.nan
    info["last_active_week"] = info["last_active_week"].fillna(0).astype(np.int64)

    event_week = np.full(len(info), -1, dtype=np.int64)
    if event.any():
        days = unreg.to_numpy(dtype="float64")
        event_week[event] = week_of_day(days[event].astype(np.int64))

    info["event_observed"] = event.astype(np.int64)
    info["event_week"] = event_week
    info["final_week"] = np.where(event, event_week, info["last_active_week"].to_numpy())
    info["final_result"] = info["final_result"].astype(str)

    out = info[ENROLLMENT_COLUMNS].sort_values(ENROLLMENT_KEY, kind="mergesort").reset_index(drop=True)
    report.n_enrollments = len(out)
    report.n_students = out["id_student"].nunique()
    return out, report


def derive_endpoint(final_result: str, date_unregistration, last_active_week: int) -> tuple[int, int | None, int]:
    """(event_observed, event_week, final_week) for one enrollment.

    event_week is None when the enrollment is censored; final_week then
    equals last_active_week.
    """
    has_date = date_unregistration is not None and not pd.isna(date_unregistration)
    if has_date and float(date_unregistration) != int(date_unregistration):
        raise SchemaError("date_unregistration must be an integer day offset")
    if str(final_result) == "Withdrawn" and has_date:
        week = week_of_day(int(date_unregistration))
        return 1, week, week
    return 0, None, int(last_active_week)


def write_enrollments(enrollments: pd.DataFrame, path: str | Path) -> None:
    out = enrollments.copy()
    out["event_week"] = out["event_week"].astype("Int64")
    out["event_week"] = out["event_week"].mask(out["event_observed"] == 0, pd.NA)
    out.to_csv(path, index=False, float_format="%.17g")


def read_enrollments(path: str | Path) -> pd.DataFrame:
    df = pd.read_csv(path)
    _require_columns(df, ENROLLMENT_COLUMNS, "enrollments")
    df["event_week"] = pd.to_numeric(df["event_week"], errors="coerce").fillna(-1).astype(np.int64)
    for col in ("event_observed", "last_active_week", "final_week"):
        df[col] = df[col].astype(np.int64)
    for col in STATIC_NUMERIC:
        df[col] = df[col].astype(np.float64)
    for col in STATIC_CATEGORICAL:
        df[col] = df[col].astype(str)
    return df
