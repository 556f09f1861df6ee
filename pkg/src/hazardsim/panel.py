"""Segment utilities for person-period panels.

A panel is a DataFrame sorted by enrollment key and week, where each
enrollment occupies one contiguous block of rows covering weeks 0..final_week
with no gaps. Helpers here locate those blocks and run per-block scans
(cumulative products, last-observation-carried-forward grids) without
per-row Python loops where it matters.
"""

from __future__ import annotations

import numpy as np
import pandas as pd

from .errors import ContractViolation

ENROLLMENT_KEY = ["id_student", "code_module", "code_presentation"]


def week_of_day(day):
    """Clamped week index for a day offset: floor(day / 7), never below 0.

    Accepts scalars or numpy arrays; negative days fold into week 0.
    """
    if np.isscalar(day):
        return max(int(day) // 7, 0)
    arr = np.asarray(day)
    return np.maximum(np.floor_divide(arr.astype(np.int64), 7), 0)


def segment_starts(pp: pd.DataFrame) -> np.ndarray:
    """Start offsets of each enrollment block, plus a final sentinel len(pp).

    The panel must be sorted by enrollment key; a key change marks a new
    block. Returns int64 array of length n_blocks + 1.
    """
    n = len(pp)
    if n == 0:
        return np.zeros(1, dtype=np.int64)
    change = np.zeros(n, dtype=bool)
    change[0] = True
    for col in ENROLLMENT_KEY:
        vals = pp[col].to_numpy()
        change[1:] |= vals[1:] != vals[:-1]
    starts = np.flatnonzero(change).astype(np.int64)
    return np.append(starts, n)


def check_contiguous_weeks(pp: pd.DataFrame, starts: np.ndarray) -> None:
    """Raise ContractViolation unless every block runs week 0..len-1."""
    weeks = pp["week"].to_numpy()
    lengths = np.diff(starts)
    expected = np.concatenate([np.arange(m) for m in lengths]) if len(lengths) else weeks[:0]
    if not np.array_equal(weeks, expected):
        raise ContractViolation("panel weeks are not contiguous from 0 within every enrollment")


def segment_index(pp: pd.DataFrame, starts: np.ndarray) -> pd.DataFrame:
    """One row per enrollment: key columns, block start/length, terminal facts.

    final_week is the last week of the block, event_observed whether the
    block ends in an event row, event_week that week (or -1).
    """
    ends = starts[1:] - 1
    firsts = starts[:-1]
    event = pp["event"].to_numpy()
    out = pp.iloc[firsts][ENROLLMENT_KEY].reset_index(drop=True).copy()
    out["start"] = firsts
    out["length"] = np.diff(starts)
    out["final_week"] = pp["week"].to_numpy()[ends]
    out["event_observed"] = event[ends].astype(np.int64)
    out["event_week"] = np.where(event[ends] == 1, out["final_week"], -1)
    return out


def cumprod_by_segment(values: np.ndarray, starts: np.ndarray) -> np.ndarray:
    """Within-block cumulative product, restarting at each block start."""
    out = np.empty_like(values, dtype=np.float64)
    for a, b in zip(starts[:-1], starts[1:]):
        np.cumprod(values[a:b], out=out[a:b])
    return out


def shifted_cumprod_by_segment(values: np.ndarray, starts: np.ndarray) -> np.ndarray:
    """Product of strictly earlier in-block values; 1.0 at each block start."""
    out = np.empty_like(values, dtype=np.float64)
    for a, b in zip(starts[:-1], starts[1:]):
        out[a] = 1.0
        if b - a > 1:
            np.cumprod(values[a : b - 1], out=out[a + 1 : b])
    return out


def locf_grid(row_values: np.ndarray, starts: np.ndarray, n_weeks: int) -> np.ndarray:
    """(n_blocks, n_weeks) matrix of block values on weeks 0..n_weeks-1.

    Week t of block i takes the row value at min(t, final_week_i): past the
    block's support the last value is carried forward. Requires contiguous
    weeks from 0 in every block.
    """
    lengths = np.diff(starts)
    cols = np.minimum(np.arange(n_weeks)[None, :], (lengths - 1)[:, None])
    return np.asarray(row_values, dtype=np.float64)[starts[:-1, None] + cols]
