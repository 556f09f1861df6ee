"""Group-wise survival gaps, regime contrasts, and bootstrap intervals.

Gap(T) is the group-1-minus-group-0 difference in cohort-mean survival at
week T under one regime; DeltaGap(T) contrasts a policy regime against
baseline. Intervals come from plain enrollment bootstrap with percentile
bounds; one resampled index set per replicate is reused across horizons so
the replicate is internally consistent.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd

from .errors import ContractViolation, EmptyInputError
from .rng import derive_rng


def group_indicator(values: np.ndarray, mapping: dict[str, int]) -> np.ndarray:
    """Map a two-level categorical column to g in {0, 1}.

    Every observed level must appear in the mapping, and both indicator
    values must be represented in the data.
    """
    if sorted(set(mapping.values())) != [0, 1]:
        raise ValueError("group mapping must use both indicator values 0 and 1")
    vals = [str(v) for v in values]
    unseen = sorted(set(vals) - set(mapping))
    if unseen:
        raise ValueError(f"group level '{unseen[0]}' has no mapping to 0/1")
    g = np.fromiter((mapping[v] for v in vals), count=len(vals), dtype=np.int64)
    for side in (0, 1):
        if not (g == side).any():
            level = sorted(k for k, v in mapping.items() if v == side)
            raise ValueError(f"group {side} ({'/'.join(level)}) is empty")
    return g


def group_means(survival_at_t: np.ndarray, g: np.ndarray) -> tuple[float, float]:
    """(mean over g=0, mean over g=1) of per-enrollment survival values."""
    s = np.asarray(survival_at_t, dtype=np.float64)
    if s.size == 0:
        raise EmptyInputError("no enrollments to average")
    if s.shape != g.shape:
        raise ContractViolation("survival values and group labels differ in length")
    return float(s[g == 0].mean()), float(s[g == 1].mean())


def gap(survival_at_t: np.ndarray, g: np.ndarray) -> float:
    mu0, mu1 = group_means(survival_at_t, g)
    return mu1 - mu0


@dataclass
class GapResult:
    """Point estimate and bootstrap interval of DeltaGap at one horizon."""

    horizon: int
    mu0_baseline: float
    mu1_baseline: float
    mu0_regime: float
    mu1_regime: float
    gap_baseline: float
    gap_regime: float
    delta_gap: float
    ci_low: float
    ci_high: float
    b_replicates: int
    seed: int
    n_group0: int
    n_group1: int
    n_redraws: int


def delta_gap_point(
    s0_at_t: np.ndarray, s1_at_t: np.ndarray, g: np.ndarray
) -> tuple[float, float, float]:
    """(gap_baseline, gap_regime, delta_gap) on the full sample."""
    if s0_at_t.shape != s1_at_t.shape:
        raise ContractViolation("baseline and regime curves differ in length")
    g0 = gap(s0_at_t, g)
    g1 = gap(s1_at_t, g)
    return g0, g1, g1 - g0


def bootstrap_delta_gap(
    s0_grid: np.ndarray,
    s1_grid: np.ndarray,
    g: np.ndarray,
    horizons: list[int],
    *,
    b_replicates: int = 500,
    seed: int = 42,
    stratified: bool = False,
) -> list[GapResult]:
    """Percentile bootstrap of DeltaGap at each horizon week.

    Resampling is by enrollment with replacement; each replicate derives its
    own generator from (seed, replicate index) and draws one index set used
    at every horizon. A replicate that loses a whole group is redrawn, with
    redraws capped at 10 * b_replicates in total. Point estimates always
    come from the full sample. With stratified=True resampling happens
    within each group separately.
    """
    n = s0_grid.shape[0]
    if n == 0:
        raise EmptyInputError("no enrollments to bootstrap")
    if s0_grid.shape != s1_grid.shape:
        raise ContractViolation("baseline and regime grids differ in shape")
    idx0 = np.flatnonzero(g == 0)
    idx1 = np.flatnonzero(g == 1)

    replicate_deltas = np.empty((b_replicates, len(horizons)), dtype=np.float64)
    n_redraws = 0
    max_redraws = 10 * b_replicates
    for r in range(b_replicates):
        rng = derive_rng(seed, f"bootstrap:{r}")
        while True:
            if stratified:
                idx = np.concatenate(
                    [
                        idx0[rng.integers(0, idx0.size, size=idx0.size)],
                        idx1[rng.integers(0, idx1.size, size=idx1.size)],
                    ]
                )
            else:
                idx = rng.integers(0, n, size=n)
            gr = g[idx]
            if (gr == 0).any() and (gr == 1).any():
                break
            n_redraws += 1
            if n_redraws > max_redraws:
                raise RuntimeError(
                    f"bootstrap exceeded {max_redraws} redraws with an empty group"
                )
        for j, t in enumerate(horizons):
            _, _, dg = delta_gap_point(s0_grid[idx, t], s1_grid[idx, t], gr)
            replicate_deltas[r, j] = dg

    results = []
    for j, t in enumerate(horizons):
        mu0_b, mu1_b = group_means(s0_grid[:, t], g)
        mu0_r, mu1_r = group_means(s1_grid[:, t], g)
        gap_b, gap_r, dg = delta_gap_point(s0_grid[:, t], s1_grid[:, t], g)
        lo, hi = np.percentile(replicate_deltas[:, j], [2.5, 97.5])
        results.append(
            GapResult(
                horizon=int(t),
                mu0_baseline=mu0_b,
                mu1_baseline=mu1_b,
                mu0_regime=mu0_r,
                mu1_regime=mu1_r,
                gap_baseline=gap_b,
                gap_regime=gap_r,
                delta_gap=dg,
                ci_low=float(lo),
                ci_high=float(hi),
                b_replicates=b_replicates,
                seed=seed,
                n_group0=int(idx0.size),
                n_group1=int(idx1.size),
                n_redraws=n_redraws,
            )
        )
    return results


def gap_results_frame(results: list[GapResult], scenario_id: str, column: str, orientation: str) -> pd.DataFrame:
    rows = []
    for res in results:
        rows.append(
            {
                "scenario_id": scenario_id,
                "group_column": column,
                "orientation": orientation,
                "horizon_week": res.horizon,
                "mu_group0_baseline": res.mu0_baseline,
                "mu_group1_baseline": res.mu1_baseline,
                "mu_group0_regime": res.mu0_regime,
                "mu_group1_regime": res.mu1_regime,
                "gap_baseline": res.gap_baseline,
                "gap_regime": res.gap_regime,
                "delta_gap": res.delta_gap,
                "ci_low": res.ci_low,
                "ci_high": res.ci_high,
                "b_replicates": res.b_replicates,
                "seed": res.seed,
                "n_group0": res.n_group0,
                "n_group1": res.n_group1,
                "n_redraws": res.n_redraws,
            }
        )
    return pd.DataFrame(rows)
