"""Stratified enrollment split and grouped cross-validation folds.

The test set is drawn within strata formed by the event indicator crossed
with quantile buckets of the enrollment's final week, so both partitions see
the same mix of outcomes and time scales. Folds group by enrollment: all
rows of an enrollment stay on one side of every fold boundary.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .errors import EmptyInputError, SchemaError
from .panel import ENROLLMENT_KEY
from .rng import derive_rng

SPLIT_COLUMNS = ENROLLMENT_KEY + [
    "partition",
    "stratum_event",
    "stratum_bucket",
    "time_for_split",
    "fold",
]


@dataclass
class SplitReport:
    edges: list[int] = field(default_factory=list)
    n_train: int = 0
    n_test: int = 0
    n_strata: int = 0
    singleton_strata: int = 0
    requested_buckets: int = 0
    effective_buckets: int = 0


def quantile_bucket_edges(values: np.ndarray, q: int) -> np.ndarray:
    """Floored, deduplicated quantile edges of `values` for q buckets.

    Collapsed edges (heavy ties) reduce the effective bucket count; a
    warning notes the reduction.
    """
    if q < 1:
        raise ValueError("q must be >= 1")
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise EmptyInputError("cannot bucket an empty value array")
    raw = np.quantile(values, np.linspace(0.0, 1.0, q + 1))
    edges = np.unique(np.floor(raw).astype(np.int64))
    if edges.size - 1 < q:
        warnings.warn(
            f"quantile edges collapsed: {q} buckets requested, {max(edges.size - 1, 1)} effective",
            stacklevel=2,
        )
    return edges


def assign_buckets(values: np.ndarray, edges: np.ndarray) -> np.ndarray:
    """Bucket index per value: bucket i covers [edges[i], edges[i+1]), the
    last bucket is open above and the first open below."""
    inner = np.asarray(edges)[1:-1]
    return np.searchsorted(inner, np.asarray(values), side="right").astype(np.int64)


def grouped_kfold(n_groups: int, k: int, seed: int) -> np.ndarray:
    """Fold label per group, sizes differing by at most one."""
    if k < 2:
        raise ValueError("k must be >= 2")
    if k > n_groups:
        raise ValueError(f"k={k} exceeds the number of groups ({n_groups})")
    perm = derive_rng(seed, "kfold").permutation(n_groups)
    folds = np.empty(n_groups, dtype=np.int64)
    folds[perm] = np.arange(n_groups) % k
    return folds


def stratified_split(
    enrollments: pd.DataFrame,
    *,
    q: int = 4,
    test_size: float = 0.30,
    seed: int = 42,
    k_folds: int = 5,
    holdout_run: tuple[str, str] | None = None,
) -> tuple[pd.DataFrame, SplitReport]:
    """Assign each enrollment to train or test, plus a fold for train rows.

    Strata are (event_observed, final-week quantile bucket). Within each
    stratum of size >= 2 the test share is round-half-even of test_size * n,
    clipped so both partitions keep at least one enrollment; singleton strata
    go to train. With holdout_run=(code_module, code_presentation) that run
    becomes the test partition instead and no sampling happens.
    """
    if not 0.0 < test_size < 1.0:
        raise ValueError("test_size must be in (0, 1)")
    if len(enrollments) == 0:
        raise EmptyInputError("no enrollments to split")
    enr = enrollments.sort_values(ENROLLMENT_KEY, kind="mergesort").reset_index(drop=True)

    time_for_split = np.where(
        enr["event_observed"].to_numpy() == 1,
        enr["event_week"].to_numpy(),
        enr["final_week"].to_numpy(),
    ).astype(np.int64)
    edges = quantile_bucket_edges(time_for_split, q)
    buckets = assign_buckets(time_for_split, edges)
    events = enr["event_observed"].to_numpy(np.int64)

    report = SplitReport(
        edges=[int(e) for e in edges],
        requested_buckets=q,
        effective_buckets=max(int(edges.size - 1), 1),
    )

    is_test = np.zeros(len(enr), dtype=bool)
    if holdout_run is not None:
        module, presentation = holdout_run
        is_test = (
            (enr["code_module"].astype(str) == str(module))
            & (enr["code_presentation"].astype(str) == str(presentation))
        ).to_numpy()
        if not is_test.any():
            raise ValueError(f"holdout run {holdout_run} matches no enrollments")
        if is_test.all():
            raise ValueError(f"holdout run {holdout_run} leaves no training enrollments")
        strata = {(int(e), int(b)) for e, b in zip(events, buckets)}
        report.n_strata = len(strata)
    else:
        order = np.arange(len(enr))
        for (e, b) in sorted({(int(e), int(b)) for e, b in zip(events, buckets)}):
            members = order[(events == e) & (buckets == b)]
            report.n_strata += 1
            n = members.size
            if n < 2:
                report.singleton_strata += 1
                continue
            n_test = int(np.clip(round(test_size * n), 1, n - 1))
            rng = derive_rng(seed, f"split:stratum:{e}:{b}")
            chosen = rng.choice(n, size=n_test, replace=False)
            is_test[members[chosen]] = True

    split = enr[ENROLLMENT_KEY].copy()
    split["partition"] = np.where(is_test, "test", "train")
    split["stratum_event"] = events
    split["stratum_bucket"] = buckets
    split["time_for_split"] = time_for_split

    n_train = int((~is_test).sum())
    folds = grouped_kfold(n_train, k_folds, seed)
    fold_col = np.full(len(enr), -1, dtype=np.int64)
    fold_col[~is_test] = folds
    split["fold"] = fold_col

    report.n_train = n_train
    report.n_test = int(is_test.sum())
    return split, report


def check_no_overlap(split: pd.DataFrame) -> None:
    """Raise if any enrollment key appears in both partitions."""
    counts = split.groupby(ENROLLMENT_KEY)["partition"].nunique()
    if (counts > 1).any():
        raise SchemaError("an enrollment key appears in both partitions")


def attach_partition(pp: pd.DataFrame, split: pd.DataFrame) -> pd.DataFrame:
    """Join partition and fold labels onto panel rows by enrollment key."""
    merged = pp.merge(
        split[ENROLLMENT_KEY + ["partition", "fold"]], on=ENROLLMENT_KEY, how="left"
    )
    if merged["partition"].isna().any():
        raise SchemaError("panel contains enrollments absent from the split")
    return merged


def write_split(split: pd.DataFrame, path) -> None:
    out = split.copy()
    out["fold"] = out["fold"].astype("Int64").mask(out["partition"] == "test", pd.NA)
    out.to_csv(path, index=False)


def read_split(path) -> pd.DataFrame:
    split = pd.read_csv(path)
    missing = [c for c in SPLIT_COLUMNS if c not in split.columns]
    if missing:
        raise SchemaError(f"split file is missing column '{missing[0]}'")
    split["fold"] = pd.to_numeric(split["fold"], errors="coerce").fillna(-1).astype(np.int64)
    for col in ("stratum_event", "stratum_bucket", "time_for_split"):
        split[col] = split[col].astype(np.int64)
    return split
