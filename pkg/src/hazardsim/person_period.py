"""Person-period panel construction.

Each enrollment expands into one row per week from 0 through final_week. All
dynamic covariates at week t are functions of activity in weeks <= t only:
total_clicks and submitted_this_week are same-week aggregates, recency counts
weeks since the last active week (0 while active, with recency_{-1} = 0), and
streak counts consecutive active weeks ending now. The event column is 1 only
on the terminal row of an observed-event enrollment.
"""

from __future__ import annotations

from collections.abc import Iterable, Mapping

import numpy as np
import pandas as pd

from .errors import ContractViolation, SchemaError
from .ingestion import RawTables, STATIC_CATEGORICAL, STATIC_NUMERIC
from .panel import ENROLLMENT_KEY, check_contiguous_weeks, segment_starts, week_of_day

DYNAMIC_COLUMNS = ["week", "total_clicks", "recency", "streak", "submitted_this_week", "active", "event"]
PP_COLUMNS = ENROLLMENT_KEY + DYNAMIC_COLUMNS + STATIC_CATEGORICAL + STATIC_NUMERIC


def _dynamic_covariates(active: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized recency/streak recursions over one enrollment's weeks.

    recency_t = 0 if active else recency_{t-1} + 1; streak_t = streak_{t-1} + 1
    if active else 0; both seeded with 0 before week 0.
    """
    idx = np.arange(active.size, dtype=np.int64)
    last_active = np.maximum.accumulate(np.where(active, idx, -1))
    recency = np.where(active, 0, idx - last_active)
    last_inactive = np.maximum.accumulate(np.where(active, -1, idx))
    streak = np.where(active, idx - last_inactive, 0)
    return recency, streak


def _fill_dynamic(
    clicks_vec: np.ndarray, submitted_vec: np.ndarray, event_observed: int
) -> dict[str, np.ndarray]:
    active = (clicks_vec > 0).astype(np.int64)
    recency, streak = _dynamic_covariates(active.astype(bool))
    event = np.zeros(clicks_vec.size, dtype=np.int64)
    if event_observed:
        event[-1] = 1
    return {
        "week": np.arange(clicks_vec.size, dtype=np.int64),
        "total_clicks": clicks_vec.astype(np.int64),
        "recency": recency,
        "streak": streak,
        "submitted_this_week": submitted_vec.astype(np.int64),
        "active": active,
        "event": event,
    }


def expand_enrollment(
    event_observed: int,
    final_week: int,
    weekly_clicks: Mapping[int, int],
    submitted_weeks: Iterable[int] = (),
) -> pd.DataFrame:
    """Rows for weeks 0..final_week of one enrollment.

    weekly_clicks maps week -> click total; weeks beyond final_week are
    discarded (activity after the endpoint must not leak in). Negative weeks
    are invalid here: day-to-week folding happens upstream.
    """
    if final_week < 0:
        raise ContractViolation("final_week must be >= 0")
    n = final_week + 1
    clicks_vec = np.zeros(n, dtype=np.int64)
    for wk, clicks in weekly_clicks.items():
        if wk < 0:
            raise ContractViolation("weekly_clicks weeks must be >= 0 (fold days upstream)")
        if wk <= final_week:
            clicks_vec[wk] += int(clicks)
    submitted_vec = np.zeros(n, dtype=np.int64)
    for wk in submitted_weeks:
        if 0 <= wk <= final_week:
            submitted_vec[wk] = 1
    return pd.DataFrame(_fill_dynamic(clicks_vec, submitted_vec, int(event_observed)))


def _grouped_week_totals(
    df: pd.DataFrame, day_col: str, value_col: str | None, enrollments: pd.DataFrame
) -> pd.DataFrame:
    """(eid, week, total) rows truncated at each enrollment's final_week."""
    keyed = df.merge(
        enrollments[ENROLLMENT_KEY + ["eid", "final_week"]], on=ENROLLMENT_KEY, how="inner"
    )
    keyed["week"] = week_of_day(keyed[day_col].to_numpy(dtype="int64"))
    keyed = keyed[keyed["week"] <= keyed["final_week"]]
    if value_col is None:
        out = keyed[["eid", "week"]].drop_duplicates()
        out["total"] = 1
    else:
        out = (
            keyed.groupby(["eid", "week"], sort=False)[value_col]
            .sum()
            .rename("total")
            .reset_index()
        )
    return out.sort_values(["eid", "week"], kind="mergesort").reset_index(drop=True)


def build_person_period(enrollments: pd.DataFrame, raw: RawTables) -> pd.DataFrame:
    """Expand every backbone enrollment against the activity tables.

    Clicks with sum_click <= 0 contribute nothing; click and submission days
    are folded to clamped weeks, so pre-start activity lands in week 0.
    """
    enr = enrollments.reset_index(drop=True).copy()
    enr["eid"] = np.arange(len(enr), dtype=np.int64)

    clicks = raw.vle_clicks[raw.vle_clicks["sum_click"] > 0]
    click_totals = _grouped_week_totals(clicks, "date", "sum_click", enr)
    submissions = _grouped_week_totals(raw.assessments, "date_submitted", None, enr)

    lengths = (enr["final_week"].to_numpy(np.int64)) + 1
    starts = np.concatenate([[0], np.cumsum(lengths)])
    total = int(starts[-1])

    buffers = {col: np.zeros(total, dtype=np.int64) for col in DYNAMIC_COLUMNS}

    c_eid = click_totals["eid"].to_numpy(np.int64)
    c_week = click_totals["week"].to_numpy(np.int64)
    c_total = click_totals["total"].to_numpy(np.int64)
    s_eid = submissions["eid"].to_numpy(np.int64)
    s_week = submissions["week"].to_numpy(np.int64)
    c_bounds = np.searchsorted(c_eid, np.arange(len(enr) + 1))
    s_bounds = np.searchsorted(s_eid, np.arange(len(enr) + 1))

    events = enr["event_observed"].to_numpy(np.int64)
    for i in range(len(enr)):
        n = lengths[i]
        clicks_vec = np.zeros(n, dtype=np.int64)
        lo, hi = c_bounds[i], c_bounds[i + 1]
        clicks_vec[c_week[lo:hi]] = c_total[lo:hi]
        submitted_vec = np.zeros(n, dtype=np.int64)
        lo, hi = s_bounds[i], s_bounds[i + 1]
        submitted_vec[s_week[lo:hi]] = 1
        block = _fill_dynamic(clicks_vec, submitted_vec, int(events[i]))
        sl = slice(starts[i], starts[i + 1])
        for col, vals in block.items():
            buffers[col][sl] = vals

    row_of_enr = np.repeat(np.arange(len(enr)), lengths)
    pp = enr.iloc[row_of_enr][ENROLLMENT_KEY + STATIC_CATEGORICAL + STATIC_NUMERIC].reset_index(
        drop=True
    )
    for col in DYNAMIC_COLUMNS:
        pp[col] = buffers[col]
    pp = pp[PP_COLUMNS]
    validate_person_period(pp)
    return pp


def validate_person_period(pp: pd.DataFrame) -> None:
    """Check the invariants every downstream stage relies on."""
    missing = [c for c in PP_COLUMNS if c not in pp.columns]
    if missing:
        raise SchemaError(f"person-period panel is missing column '{missing[0]}'")
    starts = segment_starts(pp)
    check_contiguous_weeks(pp, starts)
    event = pp["event"].to_numpy()
    if len(event):
        terminal = np.zeros(len(pp), dtype=bool)
        terminal[starts[1:] - 1] = True
        if (event[~terminal] != 0).any():
            raise ContractViolation("event rows must be terminal within their enrollment")
    for col in ("total_clicks", "recency", "streak"):
        if (pp[col].to_numpy() < 0).any():
            raise ContractViolation(f"column '{col}' must be non-negative")
    for col in ("submitted_this_week", "active", "event"):
        vals = pp[col].to_numpy()
        if not np.isin(vals, (0, 1)).all():
            raise ContractViolation(f"column '{col}' must be binary")


def write_person_period(pp: pd.DataFrame, path) -> None:
    pp.to_csv(path, index=False, float_format="%.17g")


def read_person_period(path) -> pd.DataFrame:
    pp = pd.read_csv(path)
    missing = [c for c in PP_COLUMNS if c not in pp.columns]
    if missing:
        raise SchemaError(f"person-period file is missing column '{missing[0]}'")
    for col in DYNAMIC_COLUMNS:
        pp[col] = pp[col].astype(np.int64)
    for col in STATIC_NUMERIC:
        pp[col] = pp[col].astype(np.float64)
    for col in STATIC_CATEGORICAL:
        pp[col] = pp[col].astype(str)
    return pp[PP_COLUMNS]
