"""Composite-endpoint relabeling: Fail-or-Withdrawn sensitivity pass.

The composite endpoint keeps every primary event (Withdrawn with a valid
unregistration date, at its event week) and additionally counts Fail
enrollments as events at their last active week, a terminal-time proxy. The
fitted risk scores and the censoring weights are reused unchanged; only the
labels move.
"""

from __future__ import annotations

import numpy as np
import pandas as pd

from .panel import ENROLLMENT_KEY, segment_starts


def composite_labels(enrollments: pd.DataFrame) -> pd.DataFrame:
    """Enrollment frame with the composite endpoint columns substituted.

    event_week for a Fail enrollment is its last active week; final_week is
    unchanged for every enrollment (the proxy never moves the panel's
    support), so panels built under the primary endpoint stay valid.
    """
    out = enrollments.copy()
    fail = (out["final_result"].astype(str) == "Fail") & (out["event_observed"] == 0)
    out["event_observed"] = np.where(fail, 1, out["event_observed"]).astype(np.int64)
    out["event_week"] = np.where(
        fail, out["last_active_week"], out["event_week"]
    ).astype(np.int64)
    return out


def relabel_panel(pp: pd.DataFrame, composite: pd.DataFrame) -> pd.DataFrame:
    """Flip terminal rows of newly composite-event enrollments to event=1."""
    starts = segment_starts(pp)
    terminal = np.zeros(len(pp), dtype=bool)
    terminal[starts[1:] - 1] = True
    merged = pp.merge(
        composite[ENROLLMENT_KEY + ["event_observed"]].rename(
            columns={"event_observed": "event_observed_composite"}
        ),
        on=ENROLLMENT_KEY,
        how="left",
    )
    if merged["event_observed_composite"].isna().any():
        raise ValueError("panel contains enrollments absent from the composite labels")
    out = pp.copy()
    out["event"] = np.where(
        terminal & (merged["event_observed_composite"].to_numpy() == 1), 1, 0
    ).astype(np.int64)
    return out
