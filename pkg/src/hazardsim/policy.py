"""Counterfactual engagement-policy simulation on a scored test panel.

A policy triggers per enrollment at the first week whose inactivity recency
reaches r_star and opens an intervention window of W weeks. Two branches
estimate its effect: a hazard shock multiplies the baseline hazard by
(1 - delta) on window rows, and a mechanism-aware branch multiplies clicks
by a step-decay uplift, statefully re-propagates the activity covariates,
and rescores with the same fitted model. Terminal event rows are never
modified by either branch. Effects are cohort mean survival differences on
a fixed enrollment set with last values carried forward past each support.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .censoring import HorizonSet
from .errors import ContractViolation, EmptyInputError
from .hazard import HazardModel, survival_from_hazard, survival_grid
from .panel import segment_starts
from .person_period import _dynamic_covariates

DECAY_TYPES = ("kb2023_step_2w",)

GRID_AXES = ["r_star", "window_weeks", "decay_type", "alpha_week0", "alpha_week1", "delta_shock"]

DEFAULT_GRID = {
    "r_star": [1, 2, 3],
    "window_weeks": [1, 2, 3, 4],
    "decay_type": ["kb2023_step_2w"],
    "alpha_week0": [0.20, 0.35, 0.50],
    "alpha_week1": [0.00, 0.10],
    "delta_shock": [0.08, 0.20, 0.60],
}


@dataclass(frozen=True)
class PolicyScenario:
    """One named policy configuration for either branch."""

    scenario_id: str
    branch: str
    status: str = "anchored"
    r_star: int = 1
    window_weeks: int = 2
    delta_shock: float | None = None
    alpha_week0: float = 0.35
    alpha_week1: float = 0.10
    decay_type: str = "kb2023_step_2w"
    window_exclusive_upper: bool = True
    allow_retrigger: bool = False

    def __post_init__(self):
        if self.branch not in ("shock", "mechanism_aware"):
            raise ValueError(f"unknown policy branch '{self.branch}'")
        if self.status not in ("anchored", "hypothetical"):
            raise ValueError(f"unknown scenario status '{self.status}'")
        if self.r_star < 1:
            raise ValueError("r_star must be >= 1")
        if self.window_weeks < 1:
            raise ValueError("window_weeks must be >= 1")
        if self.branch == "shock":
            if self.delta_shock is None or not 0.0 <= self.delta_shock < 1.0:
                raise ValueError("shock branch needs delta_shock in [0, 1)")
        if self.alpha_week0 < 0 or self.alpha_week1 < 0:
            raise ValueError("click uplifts must be >= 0")
        if self.decay_type not in DECAY_TYPES:
            raise ValueError(f"unknown decay_type '{self.decay_type}'")

    def to_dict(self) -> dict:
        return {
            "scenario_id": self.scenario_id,
            "branch": self.branch,
            "status": self.status,
            "r_star": self.r_star,
            "window_weeks": self.window_weeks,
            "delta_shock": self.delta_shock,
            "alpha_week0": self.alpha_week0,
            "alpha_week1": self.alpha_week1,
            "decay_type": self.decay_type,
            "window_exclusive_upper": self.window_exclusive_upper,
            "allow_retrigger": self.allow_retrigger,
        }


def default_catalog() -> list[PolicyScenario]:
    """The four standing scenarios: three shock strengths and one uplift."""
    return [
        PolicyScenario("shock_conservative", "shock", status="anchored", delta_shock=0.08),
        PolicyScenario("shock_hypothetical_a", "shock", status="hypothetical", delta_shock=0.20),
        PolicyScenario("shock_hypothetical_b", "shock", status="hypothetical", delta_shock=0.60),
        PolicyScenario("mech_shared", "mechanism_aware", status="anchored"),
    ]


@dataclass
class ActivationTable:
    """Which rows each policy window covers, on the baseline panel."""

    active_rows: np.ndarray
    trigger_week: np.ndarray
    row_trigger_week: np.ndarray
    n_triggered: int
    n_windows: int
    n_active_rows: int
    n_event_rows_excluded: int


def compute_activation(pp: pd.DataFrame, scenario: PolicyScenario) -> ActivationTable:
    """Scan each enrollment's baseline recency for trigger weeks.

    The window covers [t*, t* + W) (inclusive upper bound when configured),
    clipped to the enrollment's support; terminal event rows are excluded
    from every window and counted. Re-triggering, when enabled, resumes the
    scan at the end of the previous window on the baseline covariates.
    """
    starts = segment_starts(pp)
    recency = pp["recency"].to_numpy(np.int64)
    event = pp["event"].to_numpy(np.int64)
    n_seg = len(starts) - 1

    active = np.zeros(len(pp), dtype=bool)
    row_trigger = np.full(len(pp), -1, dtype=np.int64)
    trigger_week = np.full(n_seg, -1, dtype=np.int64)
    n_windows = 0
    n_excluded = 0
    width = scenario.window_weeks + (0 if scenario.window_exclusive_upper else 1)

    for i, (a, b) in enumerate(zip(starts[:-1], starts[1:])):
        seg_len = b - a
        pos = 0
        while pos < seg_len:
            hits = np.flatnonzero(recency[a + pos : b] >= scenario.r_star)
            if hits.size == 0:
                break
            t_star = pos + int(hits[0])
            if trigger_week[i] < 0:
                trigger_week[i] = t_star
            end = min(t_star + width, seg_len)
            window = np.arange(a + t_star, a + end)
            is_event_row = event[window] == 1
            n_excluded += int(is_event_row.sum())
            keep = window[~is_event_row]
            active[keep] = True
            row_trigger[keep] = t_star
            n_windows += 1
            if not scenario.allow_retrigger:
                break
            pos = t_star + width

    return ActivationTable(
        active_rows=active,
        trigger_week=trigger_week,
        row_trigger_week=row_trigger,
        n_triggered=int((trigger_week >= 0).sum()),
        n_windows=n_windows,
        n_active_rows=int(active.sum()),
        n_event_rows_excluded=n_excluded,
    )


def shock_hazards(h0: np.ndarray, activation: ActivationTable, delta: float) -> np.ndarray:
    """Baseline hazards scaled by (1 - delta) on window rows."""
    h1 = np.asarray(h0, dtype=np.float64).copy()
    h1[activation.active_rows] *= 1.0 - delta
    return h1


def _decay_multiplier(offsets: np.ndarray, scenario: PolicyScenario) -> np.ndarray:
    """Click uplift factor by week offset from the window's trigger."""
    mult = np.ones(offsets.size, dtype=np.float64)
    mult[offsets == 0] = 1.0 + scenario.alpha_week0
    mult[offsets == 1] = 1.0 + scenario.alpha_week1
    return mult


@dataclass
class MechDiagnostics:
    """Audit counters for the mechanism-aware rescoring path."""

    n_rows_modified: int = 0
    n_rows_scored: int = 0
    n_clicks_changed: int = 0
    n_active_changed: int = 0
    n_recency_changed: int = 0
    n_streak_changed: int = 0
    n_event_rows_modified: int = 0
    n_rows_past_support_modified: int = 0
    mean_click_delta: float = 0.0
    mean_hazard_delta: float = 0.0
    share_rows_modified: float = 0.0


def mechanism_hazards(
    model: HazardModel,
    pp: pd.DataFrame,
    h0: np.ndarray,
    activation: ActivationTable,
    scenario: PolicyScenario,
) -> tuple[np.ndarray, MechDiagnostics]:
    """Counterfactual hazards from uplifted clicks and re-derived covariates.

    Window rows get clicks scaled by the step-decay multiplier at their
    offset from the trigger. Activity flags and the recency/streak
    recursions are then re-propagated through each touched enrollment up to
    (but never including) a terminal event row, and only rows whose features
    changed are rescored.
    """
    starts = segment_starts(pp)
    event = pp["event"].to_numpy(np.int64)
    week = pp["week"].to_numpy(np.int64)

    clicks0 = pp["total_clicks"].to_numpy(np.float64)
    recency0 = pp["recency"].to_numpy(np.int64)
    streak0 = pp["streak"].to_numpy(np.int64)
    active0 = pp["active"].to_numpy(np.int64)

    clicks1 = clicks0.copy()
    rows = np.flatnonzero(activation.active_rows)
    offsets = week[rows] - activation.row_trigger_week[rows]
    clicks1[rows] = clicks0[rows] * _decay_multiplier(offsets, scenario)
    if not np.isfinite(clicks1).all():
        raise ContractViolation("counterfactual clicks are non-finite")

    recency1 = recency0.copy()
    streak1 = streak0.copy()
    active1 = (clicks1 > 0).astype(np.int64)

    touched_segments = np.unique(np.searchsorted(starts[1:], rows, side="right"))
    for i in touched_segments:
        a, b = int(starts[i]), int(starts[i + 1])
        limit = b - 1 if event[b - 1] == 1 else b
        if limit <= a:
            active1[a:b] = active0[a:b]
            continue
        rec, stk = _dynamic_covariates(active1[a:limit].astype(bool))
        recency1[a:limit] = rec
        streak1[a:limit] = stk
        if limit < b:
            # terminal event row keeps its factual covariates
            clicks1[limit:b] = clicks0[limit:b]
            active1[limit:b] = active0[limit:b]

    changed = (
        (clicks1 != clicks0)
        | (active1 != active0)
        | (recency1 != recency0)
        | (streak1 != streak0)
    )

    diag = MechDiagnostics(
        n_rows_modified=int(changed.sum()),
        n_rows_scored=int(changed.sum()),
        n_clicks_changed=int((clicks1 != clicks0).sum()),
        n_active_changed=int((active1 != active0).sum()),
        n_recency_changed=int((recency1 != recency0).sum()),
        n_streak_changed=int((streak1 != streak0).sum()),
        n_event_rows_modified=int((changed & (event == 1)).sum()),
        share_rows_modified=float(changed.mean()) if len(pp) else 0.0,
    )
    if diag.n_event_rows_modified:
        raise ContractViolation("mechanism branch modified a terminal event row")

    h1 = np.asarray(h0, dtype=np.float64).copy()
    if diag.n_rows_modified:
        cf = pp.loc[changed].copy()
        cf["total_clicks"] = clicks1[changed]
        cf["recency"] = recency1[changed]
        cf["streak"] = streak1[changed]
        cf["active"] = active1[changed]
        h1[changed] = model.predict_hazard(cf)
        deltas = clicks1[changed] - clicks0[changed]
        clicked = clicks1[changed] != clicks0[changed]
        diag.mean_click_delta = float(deltas[clicked].mean()) if clicked.any() else 0.0
        diag.mean_hazard_delta = float((h1[changed] - h0[changed]).mean())
    return h1, diag


@dataclass
class ScenarioContrast:
    """Weekly cohort-mean survival under baseline and regime, fixed N."""

    weeks: np.ndarray
    mean_survival_baseline: np.ndarray
    mean_survival_regime: np.ndarray
    delta_survival: np.ndarray
    t_policy: int
    t_eval_policy: int

    @property
    def delta_at_policy(self) -> float:
        return float(self.delta_survival[self.t_policy])

    @property
    def delta_at_eval(self) -> float:
        return float(self.delta_survival[self.t_eval_policy])

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "week": self.weeks,
                "mean_survival_baseline": self.mean_survival_baseline,
                "mean_survival_regime": self.mean_survival_regime,
                "delta_survival": self.delta_survival,
            }
        )


def scenario_contrast(
    h0: np.ndarray, h1: np.ndarray, starts: np.ndarray, horizons: HorizonSet
) -> ScenarioContrast:
    if len(h0) != len(h1):
        raise ContractViolation("baseline and regime hazards differ in length")
    n_weeks = horizons.t_eval_policy + 1
    s0 = survival_grid(survival_from_hazard(h0, starts), starts, n_weeks)
    s1 = survival_grid(survival_from_hazard(h1, starts), starts, n_weeks)
    m0 = s0.mean(axis=0)
    m1 = s1.mean(axis=0)
    return ScenarioContrast(
        weeks=np.arange(n_weeks, dtype=np.int64),
        mean_survival_baseline=m0,
        mean_survival_regime=m1,
        delta_survival=m1 - m0,
        t_policy=horizons.t_policy,
        t_eval_policy=horizons.t_eval_policy,
    )


@dataclass
class ScenarioRun:
    scenario: PolicyScenario
    activation: ActivationTable
    contrast: ScenarioContrast
    regime_hazards: np.ndarray
    mech_diagnostics: MechDiagnostics | None = None


def run_scenario(
    model: HazardModel,
    pp: pd.DataFrame,
    h0: np.ndarray,
    scenario: PolicyScenario,
    horizons: HorizonSet,
    activation: ActivationTable | None = None,
) -> ScenarioRun:
    if len(pp) == 0:
        raise EmptyInputError("cannot simulate a policy on an empty panel")
    starts = segment_starts(pp)
    if activation is None:
        activation = compute_activation(pp, scenario)
    mech_diag = None
    if scenario.branch == "shock":
        h1 = shock_hazards(h0, activation, float(scenario.delta_shock))
    else:
        h1, mech_diag = mechanism_hazards(model, pp, h0, activation, scenario)
    contrast = scenario_contrast(h0, h1, starts, horizons)
    return ScenarioRun(
        scenario=scenario,
        activation=activation,
        contrast=contrast,
        regime_hazards=h1,
        mech_diagnostics=mech_diag,
    )


def sensitivity_grid(
    model: HazardModel,
    pp: pd.DataFrame,
    h0: np.ndarray,
    horizons: HorizonSet,
    axes: dict[str, list] | None = None,
) -> pd.DataFrame:
    """Full-factorial sweep over both branches' knobs.

    One row per combination, carrying the shock and mechanism-aware survival
    deltas at both policy horizons. Activation tables and branch contrasts
    are cached across combinations that share their inputs.
    """
    axes = dict(DEFAULT_GRID if axes is None else axes)
    unknown = set(axes) - set(GRID_AXES)
    if unknown:
        raise ValueError(f"unknown grid axis '{sorted(unknown)[0]}'")
    for name in GRID_AXES:
        if name not in axes or len(axes[name]) == 0:
            raise ValueError(f"grid axis '{name}' is missing or empty")

    starts = segment_starts(pp)
    activations: dict = {}
    shock_cache: dict = {}
    mech_cache: dict = {}
    records = []
    for r_star, window, decay, a0, a1, delta in itertools.product(
        *(axes[name] for name in GRID_AXES)
    ):
        akey = (r_star, window)
        if akey not in activations:
            probe = PolicyScenario(
                "grid", "shock", r_star=r_star, window_weeks=window, delta_shock=0.0
            )
            activations[akey] = compute_activation(pp, probe)
        activation = activations[akey]

        skey = (r_star, window, delta)
        if skey not in shock_cache:
            h1 = shock_hazards(h0, activation, delta)
            shock_cache[skey] = scenario_contrast(h0, h1, starts, horizons)
        shock = shock_cache[skey]

        mkey = (r_star, window, decay, a0, a1)
        if mkey not in mech_cache:
            scenario = PolicyScenario(
                "grid",
                "mechanism_aware",
                r_star=r_star,
                window_weeks=window,
                alpha_week0=a0,
                alpha_week1=a1,
                decay_type=decay,
            )
            h1, _ = mechanism_hazards(model, pp, h0, activation, scenario)
            mech_cache[mkey] = scenario_contrast(h0, h1, starts, horizons)
        mech = mech_cache[mkey]

        records.append(
            {
                "r_star": r_star,
                "window_weeks": window,
                "decay_type": decay,
                "alpha_week0": a0,
                "alpha_week1": a1,
                "delta_shock": delta,
                "n_triggered": activation.n_triggered,
                "n_active_rows": activation.n_active_rows,
                "ds_shock_t_policy": shock.delta_at_policy,
                "ds_shock_t_eval_policy": shock.delta_at_eval,
                "ds_mech_t_policy": mech.delta_at_policy,
                "ds_mech_t_eval_policy": mech.delta_at_eval,
            }
        )
    return pd.DataFrame(records)
