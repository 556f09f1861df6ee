"""Censoring model, censoring-survival curves, and IPCW row weights.

The censoring process is modeled exactly like the event process with the
roles reversed: the terminal week of a censored enrollment is the positive
label, rows of event enrollments only contribute to the risk set. Censoring
survival uses the strictly-prior convention G(t) = prod_{k<t} (1 - hc_k), so
G(0) = 1 always.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import pandas as pd

from .errors import DegenerateSupportError
from .hazard import HazardModel, calibrate, feature_sets, fit_codec, fit_hazard
from .panel import locf_grid, segment_starts, shifted_cumprod_by_segment


@dataclass
class HorizonSet:
    """Evaluation horizons plus the weight guardrails that define them."""

    t_policy: int
    t_eval_policy: int
    t_eval_metrics: int
    g_min: float
    weight_cap: float

    def validate(self) -> None:
        if not self.t_policy <= self.t_eval_metrics <= self.t_eval_policy:
            warnings.warn(
                "horizon ordering t_policy <= t_eval_metrics <= t_eval_policy does not hold "
                f"({self.t_policy}, {self.t_eval_metrics}, {self.t_eval_policy})",
                stacklevel=2,
            )


def censor_labels(pp: pd.DataFrame) -> np.ndarray:
    """1 on the terminal row of censored enrollments, 0 elsewhere."""
    starts = segment_starts(pp)
    terminal = np.zeros(len(pp), dtype=bool)
    terminal[starts[1:] - 1] = True
    return (terminal & (pp["event"].to_numpy() == 0)).astype(np.int64)


def fit_censoring(
    pp_train: pd.DataFrame,
    row_folds: np.ndarray,
    *,
    variant: str = "full",
    lam: float = 1.0,
    max_iter: int = 100,
    tol: float = 1e-6,
    seed: int = 0,
) -> HazardModel:
    """Train the censoring hazard model on the reversed labels.

    When no enrollment is censored the model degenerates to constant zero
    hazard, making G identically 1. `seed` is reserved; fitting is
    deterministic.
    """
    del seed
    df = pp_train.copy()
    df["censor"] = censor_labels(pp_train)
    numeric, categorical = feature_sets(variant)
    codec = fit_codec(df, numeric, categorical)
    if int(df["censor"].sum()) == 0:
        return HazardModel(
            codec=codec,
            beta0=0.0,
            beta=np.zeros(codec.n_features),
            target="censor",
            variant=variant,
            lam=lam,
            calibrated=True,
            degenerate_no_events=True,
        )
    model = fit_hazard(
        df, codec, target="censor", lam=lam, max_iter=max_iter, tol=tol, variant=variant
    )
    return calibrate(model, df, row_folds, max_iter=max_iter, tol=tol)


def censoring_survival_rows(model: HazardModel, pp: pd.DataFrame) -> np.ndarray:
    """Per-row G(t) = P(censoring has not struck before week t)."""
    hc = model.predict_hazard(pp)
    starts = segment_starts(pp)
    return shifted_cumprod_by_segment(1.0 - hc, starts)


def censoring_grid(g_rows: np.ndarray, starts: np.ndarray, n_weeks: int) -> np.ndarray:
    """(n_enrollments, n_weeks) G matrix, LOCF past each enrollment's support."""
    return locf_grid(g_rows, starts, n_weeks)


def marginal_censoring_curve(g_grid: np.ndarray) -> np.ndarray:
    """Cohort-mean censoring survival per week over a fixed enrollment set."""
    return g_grid.mean(axis=0)


def metrics_horizon(marginal_curve: np.ndarray, g_min: float) -> int:
    """Largest week where the cohort-mean censoring survival stays >= g_min."""
    ok = np.flatnonzero(marginal_curve >= g_min)
    if ok.size == 0:
        raise DegenerateSupportError(
            f"marginal censoring survival is below g_min={g_min} from week 0"
        )
    return int(ok.max())


def build_horizons(
    marginal_curve: np.ndarray, *, t_policy: int, t_eval_policy: int, g_min: float, weight_cap: float
) -> HorizonSet:
    horizons = HorizonSet(
        t_policy=int(t_policy),
        t_eval_policy=int(t_eval_policy),
        t_eval_metrics=metrics_horizon(marginal_curve, g_min),
        g_min=float(g_min),
        weight_cap=float(weight_cap),
    )
    horizons.validate()
    return horizons


def ipcw_row_weights(
    g_values: np.ndarray, g_min: float, cap: float
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Truncated inverse weights: w = min(1 / max(G, g_min), cap).

    Returns (weights, floored mask, capped mask); the masks are counted
    separately even when g_min and cap coincide at the same cutoff.
    """
    g = np.asarray(g_values, dtype=np.float64)
    floored = g < g_min
    w = 1.0 / np.maximum(g, g_min)
    capped = w > cap
    return np.minimum(w, cap), floored, capped


def truncate_censored_histories(pp: pd.DataFrame, trim_weeks: int) -> pd.DataFrame:
    """Shorten censored enrollments by trim_weeks (floored at week 0).

    Event enrollments are untouched. Used to probe how sensitive IPCW
    quantities are to where censored histories are anchored.
    """
    if trim_weeks < 0:
        raise ValueError("trim_weeks must be >= 0")
    if trim_weeks == 0:
        return pp.reset_index(drop=True)
    starts = segment_starts(pp)
    event = pp["event"].to_numpy()
    week = pp["week"].to_numpy()
    keep = np.ones(len(pp), dtype=bool)
    for a, b in zip(starts[:-1], starts[1:]):
        if event[b - 1] == 1:
            continue
        new_final = max(int(week[b - 1]) - trim_weeks, 0)
        keep[a:b] = week[a:b] <= new_final
    return pp.loc[keep].reset_index(drop=True)
