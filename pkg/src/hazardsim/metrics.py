"""Evaluation metrics: row AUC, IPCW Brier, IBS, discrete C-index, ECE.

Horizon metrics follow the inverse-probability-of-censoring weighting
scheme: enrollments with an event by the horizon weigh 1/G(event week),
enrollments observed past the horizon weigh 1/G(horizon), enrollments
censored at or before the horizon weigh 0. All inverse weights are floored
at g_min inside the denominator and capped at weight_cap outside it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd

from .censoring import ipcw_row_weights
from .errors import UndefinedMetricError


def _average_ranks(values: np.ndarray) -> np.ndarray:
    order = np.argsort(values, kind="mergesort")
    sorted_vals = values[order]
    n = values.size
    new_run = np.concatenate([[True], sorted_vals[1:] != sorted_vals[:-1]])
    run_id = np.cumsum(new_run) - 1
    positions = np.arange(1, n + 1, dtype=np.float64)
    run_sum = np.bincount(run_id, weights=positions)
    run_count = np.bincount(run_id)
    ranks = np.empty(n, dtype=np.float64)
    ranks[order] = (run_sum / run_count)[run_id]
    return ranks


def roc_auc(labels: np.ndarray, scores: np.ndarray) -> float:
    """Rank-based AUC; tied scores contribute one half."""
    y = np.asarray(labels, dtype=np.float64)
    s = np.asarray(scores, dtype=np.float64)
    n_pos = int(y.sum())
    n_neg = int(y.size - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("AUC is undefined with a single class")
    ranks = _average_ranks(s)
    return float((ranks[y > 0].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


@dataclass
class HorizonAssessment:
    """Per-enrollment horizon labels and truncated IPCW weights."""

    labels: np.ndarray
    weights: np.ndarray
    n_events: int
    n_alive: int
    n_dropped: int
    n_floored: int
    n_capped: int


def horizon_assessment(
    enr_index: pd.DataFrame, g_grid: np.ndarray, horizon: int, g_min: float, cap: float
) -> HorizonAssessment:
    """Labels and weights at a horizon for enrollments aligned with g_grid.

    enr_index needs event_observed, event_week (-1 when censored) and
    final_week columns in grid row order.
    """
    event = enr_index["event_observed"].to_numpy() == 1
    event_week = enr_index["event_week"].to_numpy(np.int64)
    final_week = enr_index["final_week"].to_numpy(np.int64)

    by_horizon = event & (event_week <= horizon)
    alive = (event & (event_week > horizon)) | (~event & (final_week > horizon))
    dropped = ~(by_horizon | alive)

    g_at = np.ones(len(enr_index), dtype=np.float64)
    g_at[by_horizon] = g_grid[by_horizon, event_week[by_horizon]]
    g_at[alive] = g_grid[alive, horizon]

    weights, floored, capped = ipcw_row_weights(g_at, g_min, cap)
    weights[dropped] = 0.0
    labels = by_horizon.astype(np.float64)
    used = ~dropped
    return HorizonAssessment(
        labels=labels,
        weights=weights,
        n_events=int(by_horizon.sum()),
        n_alive=int(alive.sum()),
        n_dropped=int(dropped.sum()),
        n_floored=int((floored & used).sum()),
        n_capped=int((capped & used).sum()),
    )


def brier_ipcw(
    labels: np.ndarray, probs: np.ndarray, weights: np.ndarray, normalization: str = "count"
) -> float:
    """Weighted squared error; divided by n (count) or by the weight sum."""
    y = np.asarray(labels, dtype=np.float64)
    p = np.asarray(probs, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    if y.size == 0:
        raise UndefinedMetricError("Brier score is undefined on empty inputs")
    total = float(np.sum(w * (y - p) ** 2))
    if normalization == "count":
        return total / y.size
    if normalization == "weight_sum":
        wsum = float(w.sum())
        if wsum == 0.0:
            raise UndefinedMetricError("Brier weight sum is zero")
        return total / wsum
    raise ValueError(f"unknown normalization '{normalization}'")


def integrated_brier(
    enr_index: pd.DataFrame,
    g_grid: np.ndarray,
    surv_grid: np.ndarray,
    horizon: int,
    g_min: float,
    cap: float,
    normalization: str = "count",
) -> tuple[float, np.ndarray]:
    """Mean of the weekly IPCW Brier scores over weeks 0..horizon."""
    weekly = np.empty(horizon + 1, dtype=np.float64)
    for t in range(horizon + 1):
        assess = horizon_assessment(enr_index, g_grid, t, g_min, cap)
        weekly[t] = brier_ipcw(assess.labels, 1.0 - surv_grid[:, t], assess.weights, normalization)
    return float(weekly.mean()), weekly


def concordance_discrete(
    enr_index: pd.DataFrame,
    g_grid: np.ndarray,
    surv_grid: np.ndarray,
    horizon: int,
    g_min: float,
    cap: float,
) -> float:
    """IPCW-weighted discrete C-index over event weeks up to the horizon.

    Index cases are events at week t <= horizon; comparators are enrollments
    still event-free through t (observed past t, or censored exactly at t).
    Ordering uses predicted cumulative incidence at week t; ties count half.
    Pair weight is the product of the two truncated inverse weights at t.
    """
    event = enr_index["event_observed"].to_numpy() == 1
    event_week = enr_index["event_week"].to_numpy(np.int64)
    final_week = enr_index["final_week"].to_numpy(np.int64)

    numerator = 0.0
    denominator = 0.0
    for t in np.unique(event_week[event & (event_week <= horizon)]):
        t = int(t)
        cases = np.flatnonzero(event & (event_week == t))
        comparators = np.flatnonzero((final_week > t) | (~event & (final_week == t)))
        if cases.size == 0 or comparators.size == 0:
            continue
        w_all, _, _ = ipcw_row_weights(g_grid[:, t], g_min, cap)
        risk = 1.0 - surv_grid[:, t]
        comp_risk = risk[comparators]
        comp_w = w_all[comparators]
        order = np.argsort(comp_risk, kind="mergesort")
        comp_sorted = comp_risk[order]
        cum_w = np.concatenate([[0.0], np.cumsum(comp_w[order])])
        total_w = cum_w[-1]
        lo = np.searchsorted(comp_sorted, risk[cases], side="left")
        hi = np.searchsorted(comp_sorted, risk[cases], side="right")
        below = cum_w[lo]
        ties = cum_w[hi] - cum_w[lo]
        case_w = w_all[cases]
        numerator += float(np.sum(case_w * (below + 0.5 * ties)))
        denominator += float(np.sum(case_w * total_w))
    if denominator == 0.0:
        raise UndefinedMetricError("no comparable pairs for the C-index")
    return numerator / denominator


def expected_calibration_error(probs: np.ndarray, labels: np.ndarray, n_bins: int = 15) -> float:
    """Equal-width-bin gap between mean prediction and event rate."""
    p = np.asarray(probs, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if p.size == 0:
        raise UndefinedMetricError("ECE is undefined on empty inputs")
    bins = np.minimum((p * n_bins).astype(np.int64), n_bins - 1)
    ece = 0.0
    for b in range(n_bins):
        mask = bins == b
        n_b = int(mask.sum())
        if n_b == 0:
            continue
        ece += (n_b / p.size) * abs(float(p[mask].mean()) - float(y[mask].mean()))
    return ece


def by_group_row_metrics(
    labels: np.ndarray, probs: np.ndarray, groups: np.ndarray, n_bins: int = 15
) -> pd.DataFrame:
    """Row-level AUC, unweighted Brier, and ECE per group value.

    Metrics undefined for a group (single class) come back as NaN rather
    than failing the whole table.
    """
    y = np.asarray(labels, dtype=np.float64)
    p = np.asarray(probs, dtype=np.float64)
    rows = []
    for value in sorted(pd.unique(groups)):
        mask = groups == value
        yg, pg = y[mask], p[mask]
        try:
            auc = roc_auc(yg, pg)
        except UndefinedMetricError:
            auc = float("nan")
        brier = float(np.mean((yg - pg) ** 2))
        ece = expected_calibration_error(pg, yg, n_bins)
        rows.append(
            {"group": value, "n_rows": int(mask.sum()), "auc": auc, "brier": brier, "ece": ece}
        )
    return pd.DataFrame(rows)
