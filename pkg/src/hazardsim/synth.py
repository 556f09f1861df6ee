"""Deterministic synthetic cohort generator in the raw-table schema.

Enrollments carry a latent weekly engagement process (with an at-risk flag
lowering engagement, so recency and streak carry real signal), a discrete
event hazard that can depend on the realized covariates through log-odds
effects, and an independent weekly censoring draw. Censoring at week t wins
over an event at the same week. The generator emits click logs, submission
logs, registration rows, and student info consistent with those draws, plus
a ground-truth record for tests.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import pandas as pd

from .ingestion import RawTables
from .rng import derive_rng

SUPPORTED_EFFECTS = ("recency", "streak", "active", "submitted_this_week", "gender_F")

_MODULES = ("AAA", "BBB", "CCC", "DDD", "EEE", "FFF")
_PRESENTATIONS = ("2013B", "2013J", "2014B", "2014J")
_EDUCATION = ("A Level or Equivalent", "HE Qualification", "Lower Than A Level")
_AGE_BANDS = ("0-35", "35-55", "55<=")


@dataclass(frozen=True)
class SynthSpec:
    """Knobs for one synthetic cohort; identical specs generate identical tables."""

    n_enrollments: int = 400
    max_weeks: int = 20
    base_hazard: float = 0.06
    covariate_effects: dict = field(default_factory=dict)
    censor_rate: float = 0.04
    seed: int = 7
    n_modules: int = 2
    n_presentations: int = 2
    activity_base: float = 0.60
    at_risk_share: float = 0.30
    at_risk_activity: float = 0.35
    click_rate: float = 6.0
    submit_every: int = 3
    submit_prob: float = 0.5
    missing_date_rate: float = 0.0
    prestart_rate: float = 0.10
    zero_click_row_rate: float = 0.05
    duplicate_rate: float = 0.0

    def validate(self) -> None:
        if self.n_enrollments < 1:
            raise ValueError("n_enrollments must be >= 1")
        if self.max_weeks < 1:
            raise ValueError("max_weeks must be >= 1")
        for name, p in (
            ("base_hazard", self.base_hazard),
            ("censor_rate", self.censor_rate),
        ):
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must be a probability")
        if not 0.0 < self.base_hazard < 1.0:
            raise ValueError("base_hazard must be in (0, 1)")
        if not 1 <= self.n_modules <= len(_MODULES):
            raise ValueError(f"n_modules must be in [1, {len(_MODULES)}]")
        if not 1 <= self.n_presentations <= len(_PRESENTATIONS):
            raise ValueError(f"n_presentations must be in [1, {len(_PRESENTATIONS)}]")
        unknown = sorted(set(self.covariate_effects) - set(SUPPORTED_EFFECTS))
        if unknown:
            raise ValueError(f"unknown covariate effect '{unknown[0]}'")

    @classmethod
    def from_json(cls, path: str | Path) -> "SynthSpec":
        data = json.loads(Path(path).read_text())
        known = set(cls.__dataclass_fields__)
        unknown = sorted(set(data) - known)
        if unknown:
            raise ValueError(f"unknown synth spec key '{unknown[0]}'")
        spec = cls(**data)
        spec.validate()
        return spec


@dataclass
class SynthResult:
    tables: RawTables
    ground_truth: pd.DataFrame


def _logit(p: float) -> float:
    return math.log(p / (1.0 - p))


def generate(spec: SynthSpec) -> SynthResult:
    """Sample one cohort; all draws come from a single derived generator."""
    spec.validate()
    rng = derive_rng(spec.seed, "synth")
    modules = _MODULES[: spec.n_modules]
    presentations = _PRESENTATIONS[: spec.n_presentations]
    effects = dict(spec.covariate_effects)
    base_logit = _logit(spec.base_hazard)

    info_rows, reg_rows, vle_rows, assess_rows, truth_rows = [], [], [], [], []
    next_assessment_id = 30000

    for i in range(spec.n_enrollments):
        id_student = 100000 + i
        code_module = modules[int(rng.integers(0, len(modules)))]
        code_presentation = presentations[int(rng.integers(0, len(presentations)))]
        gender = "F" if rng.random() < 0.5 else "M"
        education = _EDUCATION[int(rng.integers(0, len(_EDUCATION)))]
        age_band = _AGE_BANDS[int(rng.integers(0, len(_AGE_BANDS)))]
        prev_attempts = int(rng.integers(0, 4))
        credits = 30 * int(rng.integers(1, 9))
        at_risk = rng.random() < spec.at_risk_share
        p_active = spec.at_risk_activity if at_risk else spec.activity_base

        if spec.censor_rate >= 1.0:
            censor_week = 0
        elif spec.censor_rate <= 0.0:
            censor_week = spec.max_weeks
        else:
            censor_week = min(
                int(rng.geometric(spec.censor_rate)) - 1, spec.max_weeks
            )

        recency = 0
        streak = 0
        event_week = -1
        weekly_active: list[int] = []
        weekly_submitted: list[int] = []
        for t in range(spec.max_weeks + 1):
            if t == censor_week:
                break
            active = 1 if rng.random() < p_active else 0
            recency = 0 if active else recency + 1
            streak = streak + 1 if active else 0
            submitted = int(
                t > 0 and t % spec.submit_every == 0 and rng.random() < spec.submit_prob
            )
            weekly_active.append(active)
            weekly_submitted.append(submitted)
            z = base_logit
            z += effects.get("recency", 0.0) * recency
            z += effects.get("streak", 0.0) * streak
            z += effects.get("active", 0.0) * active
            z += effects.get("submitted_this_week", 0.0) * submitted
            z += effects.get("gender_F", 0.0) * (1 if gender == "F" else 0)
            hazard = 1.0 / (1.0 + math.exp(-z))
            if rng.random() < hazard:
                event_week = t
                break

        observed_weeks = len(weekly_active)

        if event_week >= 0:
            final_result = "Withdrawn"
            if rng.random() < spec.missing_date_rate:
                date_unregistration = None
            else:
                date_unregistration = 7 * event_week + int(rng.integers(0, 7))
        else:
            pick = rng.random()
            final_result = "Pass" if pick < 0.5 else ("Fail" if pick < 0.8 else "Distinction")
            date_unregistration = None

        info_rows.append(
            {
                "id_student": id_student,
                "code_module": code_module,
                "code_presentation": code_presentation,
                "gender": gender,
                "highest_education": education,
                "age_band": age_band,
                "num_of_prev_attempts": prev_attempts,
                "studied_credits": credits,
                "final_result": final_result,
            }
        )
        reg_rows.append(
            {
                "id_student": id_student,
                "code_module": code_module,
                "code_presentation": code_presentation,
                "date_registration": -7 * int(rng.integers(0, 4)),
                "date_unregistration": date_unregistration,
            }
        )
        for t in range(observed_weeks):
            if weekly_active[t]:
                n_days = int(rng.integers(1, 4))
                offsets = rng.choice(7, size=n_days, replace=False)
                for off in sorted(int(o) for o in offsets):
                    day = 7 * t + off
                    if t == 0 and rng.random() < spec.prestart_rate:
                        day = -int(rng.integers(1, 15))
                    clicks = 1 + int(rng.poisson(spec.click_rate / n_days))
                    vle_rows.append(
                        {
                            "id_student": id_student,
                            "code_module": code_module,
                            "code_presentation": code_presentation,
                            "date": day,
                            "sum_click": clicks,
                        }
                    )
            elif rng.random() < spec.zero_click_row_rate:
                vle_rows.append(
                    {
                        "id_student": id_student,
                        "code_module": code_module,
                        "code_presentation": code_presentation,
                        "date": 7 * t + int(rng.integers(0, 7)),
                        "sum_click": 0,
                    }
                )
            if weekly_submitted[t]:
                assess_rows.append(
                    {
                        "id_student": id_student,
                        "code_module": code_module,
                        "code_presentation": code_presentation,
                        "id_assessment": next_assessment_id,
                        "date_submitted": 7 * t + int(rng.integers(0, 7)),
                    }
                )
                next_assessment_id += 1

        truth_rows.append(
            {
                "id_student": id_student,
                "code_module": code_module,
                "code_presentation": code_presentation,
                "true_event_week": event_week,
                "censor_week": censor_week,
                "at_risk": int(at_risk),
                "p_active": p_active,
                "final_result": final_result,
                "date_missing": int(final_result == "Withdrawn" and date_unregistration is None),
            }
        )

    student_info = pd.DataFrame(info_rows)
    if spec.duplicate_rate > 0:
        dup_mask = rng.random(len(student_info)) < spec.duplicate_rate
        if dup_mask.any():
            student_info = pd.concat(
                [student_info, student_info[dup_mask]], ignore_index=True
            )

    empty_vle = pd.DataFrame(
        columns=["id_student", "code_module", "code_presentation", "date", "sum_click"]
    )
    empty_assess = pd.DataFrame(
        columns=["id_student", "code_module", "code_presentation", "id_assessment", "date_submitted"]
    )
    tables = RawTables(
        student_info=student_info,
        registrations=pd.DataFrame(reg_rows),
        vle_clicks=pd.DataFrame(vle_rows) if vle_rows else empty_vle,
        assessments=pd.DataFrame(assess_rows) if assess_rows else empty_assess,
    )
    if tables.vle_clicks.empty:
        tables.vle_clicks = tables.vle_clicks.astype(
            {"id_student": np.int64, "date": np.int64, "sum_click": np.int64},
            errors="ignore",
        )
    return SynthResult(tables=tables, ground_truth=pd.DataFrame(truth_rows))


def write_tables(result: SynthResult, out_dir: str | Path, extension: str = ".csv") -> None:
    """Write the four raw tables plus the ground-truth record."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    t = result.tables
    reg = t.registrations.copy()
    reg["date_unregistration"] = reg["date_unregistration"].astype("Int64")
    t.student_info.to_csv(out_dir / f"studentInfo{extension}", index=False)
    reg.to_csv(out_dir / f"studentRegistration{extension}", index=False)
    t.vle_clicks.to_csv(out_dir / f"studentVle{extension}", index=False)
    t.assessments.to_csv(out_dir / f"studentAssessment{extension}", index=False)
    result.ground_truth.to_csv(out_dir / f"groundTruth{extension}", index=False)


def default_spec(**overrides) -> SynthSpec:
    """A small cohort with mild covariate signal, handy for tests and demos."""
    base = SynthSpec(covariate_effects={"recency": 0.25, "gender_F": -0.15})
    return replace(base, **overrides) if overrides else base
