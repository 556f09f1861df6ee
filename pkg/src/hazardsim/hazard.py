"""Discrete-time logistic hazard model with grouped Platt calibration.

The hazard of an event in week t given survival to t is modeled as a
logistic function of standardized numeric covariates and one-hot categorical
blocks. Fitting minimizes class-weighted log loss plus an L2 penalty on the
non-intercept coefficients via damped Newton steps. Calibration fits one
sigmoid on pooled out-of-fold raw scores from enrollment-grouped folds, then
keeps the full-train coefficients.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import pandas as pd

from .errors import CalibrationError, ContractViolation, TrainingError
from .panel import locf_grid

NUMERIC_FEATURES = [
    "total_clicks",
    "studied_credits",
    "num_of_prev_attempts",
    "recency",
    "streak",
    "submitted_this_week",
]
CATEGORICAL_FEATURES = [
    "week",
    "code_module",
    "code_presentation",
    "highest_education",
    "age_band",
    "gender",
]

ABLATION_DROPS = {
    "full": (),
    "no_recency_streak": ("recency", "streak"),
    "no_activity": ("total_clicks",),
}

_CHUNK = 65536


def feature_sets(variant: str) -> tuple[list[str], list[str]]:
    """(numeric, categorical) feature names for a model variant."""
    if variant not in ABLATION_DROPS:
        raise ValueError(f"unknown model variant '{variant}'")
    dropped = set(ABLATION_DROPS[variant])
    return [c for c in NUMERIC_FEATURES if c not in dropped], list(CATEGORICAL_FEATURES)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z, dtype=np.float64)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


@dataclass
class FeatureCodec:
    """Standardization and one-hot encoding state learned on training rows.

    Numeric columns use population mean/std; constant columns are dropped
    with a warning. Categorical levels are the sorted training levels;
    unseen levels at transform time encode to an all-zero block.
    """

    numeric: list[str]
    means: np.ndarray
    stds: np.ndarray
    categorical: list[str]
    levels: dict[str, list]
    dropped_numeric: list[str] = field(default_factory=list)

    @property
    def n_features(self) -> int:
        return len(self.numeric) + sum(len(v) for v in self.levels.values())

    @property
    def column_names(self) -> list[str]:
        names = [f"num:{c}" for c in self.numeric]
        for col in self.categorical:
            names.extend(f"{col}={lvl}" for lvl in self.levels[col])
        return names

    def transform(self, df: pd.DataFrame) -> np.ndarray:
        n = len(df)
        X = np.zeros((n, self.n_features), dtype=np.float64)
        for j, col in enumerate(self.numeric):
            X[:, j] = (df[col].to_numpy(np.float64) - self.means[j]) / self.stds[j]
        offset = len(self.numeric)
        for col in self.categorical:
            levels = self.levels[col]
            index = {lvl: i for i, lvl in enumerate(levels)}
            vals = df[col].to_numpy()
            codes = np.fromiter(
                (index.get(v, -1) for v in vals), count=n, dtype=np.int64
            )
            seen = codes >= 0
            X[np.flatnonzero(seen), offset + codes[seen]] = 1.0
            offset += len(levels)
        if not np.isfinite(X).all():
            raise ContractViolation("encoded design matrix contains non-finite values")
        return X

    def to_dict(self) -> dict:
        return {
            "numeric": list(self.numeric),
            "means": [float(v) for v in self.means],
            "stds": [float(v) for v in self.stds],
            "categorical": list(self.categorical),
            "levels": {c: list(v) for c, v in self.levels.items()},
            "dropped_numeric": list(self.dropped_numeric),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureCodec":
        levels = {}
        for col, vals in d["levels"].items():
            levels[col] = [int(v) for v in vals] if col == "week" else [str(v) for v in vals]
        return cls(
            numeric=list(d["numeric"]),
            means=np.asarray(d["means"], dtype=np.float64),
            stds=np.asarray(d["stds"], dtype=np.float64),
            categorical=list(d["categorical"]),
            levels=levels,
            dropped_numeric=list(d.get("dropped_numeric", [])),
        )


def fit_codec(
    df: pd.DataFrame,
    numeric: list[str] | None = None,
    categorical: list[str] | None = None,
) -> FeatureCodec:
    numeric = list(NUMERIC_FEATURES if numeric is None else numeric)
    categorical = list(CATEGORICAL_FEATURES if categorical is None else categorical)
    kept, means, stds, dropped = [], [], [], []
    for col in numeric:
        vals = df[col].to_numpy(np.float64)
        std = float(vals.std())
        if std == 0.0:
            dropped.append(col)
            warnings.warn(f"numeric feature '{col}' is constant on train rows; dropped", stacklevel=2)
            continue
        kept.append(col)
        means.append(float(vals.mean()))
        stds.append(std)
    levels = {}
    for col in categorical:
        vals = df[col].to_numpy()
        uniq = sorted(set(int(v) for v in vals)) if col == "week" else sorted(set(str(v) for v in vals))
        levels[col] = list(uniq)
    return FeatureCodec(
        numeric=kept,
        means=np.asarray(means, dtype=np.float64),
        stds=np.asarray(stds, dtype=np.float64),
        categorical=categorical,
        levels=levels,
        dropped_numeric=dropped,
    )


def class_weights(y: np.ndarray) -> tuple[float, float]:
    """(w_negative, w_positive) balancing both classes to equal total mass."""
    n = y.size
    n_pos = int(y.sum())
    n_neg = n - n_pos
    if n_pos == 0 or n_neg == 0:
        raise TrainingError("training labels contain a single class")
    return n / (2.0 * n_neg), n / (2.0 * n_pos)


def weighted_objective(
    theta: np.ndarray, X: np.ndarray, y: np.ndarray, sample_weight: np.ndarray, lam: float
) -> tuple[float, np.ndarray]:
    """Penalized class-weighted log loss and its gradient.

    theta stacks [intercept, coefficients]; the intercept is unpenalized.
    """
    b0, beta = theta[0], theta[1:]
    z = b0 + X @ beta
    p = _sigmoid(z)
    loss = float(np.sum(sample_weight * (np.logaddexp(0.0, z) - y * z)))
    loss += 0.5 * lam * float(beta @ beta)
    r = sample_weight * (p - y)
    grad = np.concatenate([[r.sum()], X.T @ r + lam * beta])
    return loss, grad


def _newton_pieces(X, y, w, b0, beta, lam, want_hessian):
    """One chunked pass: objective, gradient, and optionally the Hessian."""
    n, p = X.shape
    loss = 0.0
    g0 = 0.0
    gb = np.zeros(p)
    h11 = 0.0
    h1b = np.zeros(p)
    hbb = np.zeros((p, p)) if want_hessian else None
    for a in range(0, n, _CHUNK):
        Xc = X[a : a + _CHUNK]
        yc = y[a : a + _CHUNK]
        wc = w[a : a + _CHUNK]
        z = b0 + Xc @ beta
        pc = _sigmoid(z)
        loss += float(np.sum(wc * (np.logaddexp(0.0, z) - yc * z)))
        r = wc * (pc - yc)
        g0 += float(r.sum())
        gb += Xc.T @ r
        if want_hessian:
            q = wc * pc * (1.0 - pc)
            h11 += float(q.sum())
            h1b += Xc.T @ q
            hbb += Xc.T @ (q[:, None] * Xc)
    loss += 0.5 * lam * float(beta @ beta)
    gb = gb + lam * beta
    if want_hessian:
        hbb = hbb + lam * np.eye(p)
    return loss, g0, gb, h11, h1b, hbb


def fit_logistic(
    X: np.ndarray,
    y: np.ndarray,
    sample_weight: np.ndarray,
    lam: float,
    max_iter: int = 100,
    tol: float = 1e-6,
) -> tuple[float, np.ndarray, int, float]:
    """Damped Newton minimization from zero start.

    Converges when the gradient infinity norm falls to tol relative to the
    starting gradient (absolute floor max(1, .)); otherwise TrainingError.
    Returns (intercept, coefficients, iterations, final gradient norm).
    """
    n, p = X.shape
    if p == 0:
        raise TrainingError("design matrix has no columns after encoding")
    b0 = 0.0
    beta = np.zeros(p)
    loss, g0, gb, h11, h1b, hbb = _newton_pieces(X, y, sample_weight, b0, beta, lam, True)
    gnorm0 = max(abs(g0), float(np.abs(gb).max()) if p else 0.0)
    threshold = tol * max(1.0, gnorm0)
    for it in range(1, max_iter + 1):
        gnorm = max(abs(g0), float(np.abs(gb).max()))
        if gnorm <= threshold:
            return b0, beta, it - 1, gnorm
        H = np.empty((p + 1, p + 1))
        H[0, 0] = h11
        H[0, 1:] = h1b
        H[1:, 0] = h1b
        H[1:, 1:] = hbb
        g = np.concatenate([[g0], gb])
        try:
            step = np.linalg.solve(H, g)
        except np.linalg.LinAlgError:
            step = np.linalg.solve(H + 1e-10 * np.eye(p + 1), g)
        slope = -float(g @ step)
        eta = 1.0
        while eta > 1e-10:
            nb0 = b0 - eta * step[0]
            nbeta = beta - eta * step[1:]
            nloss, ng0, ngb, nh11, nh1b, nhbb = _newton_pieces(
                X, y, sample_weight, nb0, nbeta, lam, True
            )
            if nloss <= loss + 1e-4 * eta * slope:
                break
            eta *= 0.5
        b0, beta = nb0, nbeta
        loss, g0, gb, h11, h1b, hbb = nloss, ng0, ngb, nh11, nh1b, nhbb
    gnorm = max(abs(g0), float(np.abs(gb).max()))
    if gnorm <= threshold:
        return b0, beta, max_iter, gnorm
    raise TrainingError(
        f"Newton solver did not converge in {max_iter} iterations (gradient norm {gnorm:.3e})"
    )


def fit_sigmoid(scores: np.ndarray, labels: np.ndarray, max_iter: int = 100) -> tuple[float, float]:
    """Sigmoid map h = 1 / (1 + exp(a*s + b)) fit by Newton steps.

    Targets are smoothed counts (n_pos+1)/(n_pos+2) and 1/(n_neg+2), which
    regularizes the map when a fold's scores separate perfectly.
    """
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if s.size == 0:
        raise CalibrationError("no scores to calibrate on")
    n_pos = float(y.sum())
    n_neg = float(y.size - y.sum())
    t = np.where(y > 0, (n_pos + 1.0) / (n_pos + 2.0), 1.0 / (n_neg + 2.0))
    a = 0.0
    b = float(np.log((n_neg + 1.0) / (n_pos + 1.0)))

    def value(a_, b_):
        u = a_ * s + b_
        return float(np.sum(t * np.logaddexp(0.0, u) + (1.0 - t) * np.logaddexp(0.0, -u)))

    loss = value(a, b)
    for _ in range(max_iter):
        u = a * s + b
        p = _sigmoid(-u)
        d = t - p
        ga = float(d @ s)
        gb = float(d.sum())
        if max(abs(ga), abs(gb)) <= 1e-10 * max(1.0, s.size):
            break
        q = p * (1.0 - p)
        haa = float(q @ (s * s)) + 1e-12
        hab = float(q @ s)
        hbb = float(q.sum()) + 1e-12
        det = haa * hbb - hab * hab
        if det <= 0:
            break
        da = (hbb * ga - hab * gb) / det
        db = (haa * gb - hab * ga) / det
        eta = 1.0
        while eta > 1e-10:
            na, nb = a - eta * da, b - eta * db
            nloss = value(na, nb)
            if nloss <= loss + 1e-12:
                break
            eta *= 0.5
        a, b, loss = na, nb, nloss
    return float(a), float(b)


@dataclass
class HazardModel:
    """Fitted hazard (or censoring) model plus its encoding state."""

    codec: FeatureCodec
    beta0: float
    beta: np.ndarray
    calib_a: float = -1.0
    calib_b: float = 0.0
    lam: float = 1.0
    weight_negative: float = 1.0
    weight_positive: float = 1.0
    n_iter: int = 0
    variant: str = "full"
    target: str = "event"
    calibrated: bool = False
    degenerate_no_events: bool = False

    def raw_scores(self, df: pd.DataFrame) -> np.ndarray:
        out = np.empty(len(df), dtype=np.float64)
        for a in range(0, len(df), _CHUNK):
            X = self.codec.transform(df.iloc[a : a + _CHUNK])
            out[a : a + X.shape[0]] = self.beta0 + X @ self.beta
        return out

    def hazard_from_scores(self, scores: np.ndarray) -> np.ndarray:
        if self.degenerate_no_events:
            return np.zeros(scores.size, dtype=np.float64)
        return _sigmoid(-(self.calib_a * scores + self.calib_b))

    def predict_hazard(self, df: pd.DataFrame) -> np.ndarray:
        if self.degenerate_no_events:
            return np.zeros(len(df), dtype=np.float64)
        return self.hazard_from_scores(self.raw_scores(df))

    def to_dict(self) -> dict:
        return {
            "codec": self.codec.to_dict(),
            "beta0": float(self.beta0),
            "beta": [float(v) for v in self.beta],
            "calib_a": float(self.calib_a),
            "calib_b": float(self.calib_b),
            "lam": float(self.lam),
            "weight_negative": float(self.weight_negative),
            "weight_positive": float(self.weight_positive),
            "n_iter": int(self.n_iter),
            "variant": self.variant,
            "target": self.target,
            "calibrated": bool(self.calibrated),
            "degenerate_no_events": bool(self.degenerate_no_events),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "HazardModel":
        return cls(
            codec=FeatureCodec.from_dict(d["codec"]),
            beta0=float(d["beta0"]),
            beta=np.asarray(d["beta"], dtype=np.float64),
            calib_a=float(d["calib_a"]),
            calib_b=float(d["calib_b"]),
            lam=float(d["lam"]),
            weight_negative=float(d["weight_negative"]),
            weight_positive=float(d["weight_positive"]),
            n_iter=int(d["n_iter"]),
            variant=str(d["variant"]),
            target=str(d["target"]),
            calibrated=bool(d["calibrated"]),
            degenerate_no_events=bool(d.get("degenerate_no_events", False)),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), sort_keys=True, indent=1) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "HazardModel":
        return cls.from_dict(json.loads(Path(path).read_text()))


def fit_hazard(
    df: pd.DataFrame,
    codec: FeatureCodec,
    *,
    target: str = "event",
    lam: float = 1.0,
    max_iter: int = 100,
    tol: float = 1e-6,
    variant: str = "full",
) -> HazardModel:
    """Fit the uncalibrated model (identity calibration a=-1, b=0)."""
    y = df[target].to_numpy(np.float64)
    w_neg, w_pos = class_weights(y)
    sample_weight = np.where(y > 0, w_pos, w_neg)
    X = codec.transform(df)
    b0, beta, n_iter, _ = fit_logistic(X, y, sample_weight, lam, max_iter=max_iter, tol=tol)
    return HazardModel(
        codec=codec,
        beta0=b0,
        beta=beta,
        lam=lam,
        weight_negative=w_neg,
        weight_positive=w_pos,
        n_iter=n_iter,
        variant=variant,
        target=target,
    )


def calibrate(
    model: HazardModel,
    df: pd.DataFrame,
    row_folds: np.ndarray,
    *,
    max_iter: int = 100,
    tol: float = 1e-6,
) -> HazardModel:
    """Attach a Platt sigmoid fit on pooled out-of-fold raw scores.

    Per fold, a model with the same hyperparameters is fit on the complement
    and scores the held-out rows. Folds whose complement is single-class are
    skipped with a warning; if every fold is skipped, CalibrationError. The
    returned model keeps `model`'s full-train coefficients.
    """
    y = df[model.target].to_numpy(np.float64)
    folds = np.asarray(row_folds)
    pooled_scores, pooled_labels = [], []
    for f in np.unique(folds):
        held = folds == f
        rest = ~held
        y_rest = y[rest]
        if y_rest.sum() in (0, y_rest.size):
            warnings.warn(f"fold {f} complement is single-class; skipped for calibration", stacklevel=2)
            continue
        fold_model = fit_hazard(
            df.loc[rest],
            model.codec,
            target=model.target,
            lam=model.lam,
            max_iter=max_iter,
            tol=tol,
            variant=model.variant,
        )
        pooled_scores.append(fold_model.raw_scores(df.loc[held]))
        pooled_labels.append(y[held])
    if not pooled_scores:
        raise CalibrationError("every fold was single-class; cannot calibrate")
    a, b = fit_sigmoid(np.concatenate(pooled_scores), np.concatenate(pooled_labels))
    return replace(model, calib_a=a, calib_b=b, calibrated=True)


def train_hazard_model(
    df: pd.DataFrame,
    row_folds: np.ndarray,
    *,
    variant: str = "full",
    target: str = "event",
    lam: float = 1.0,
    max_iter: int = 100,
    tol: float = 1e-6,
    seed: int = 0,
) -> HazardModel:
    """Codec fit, full-train fit, then grouped out-of-fold calibration.

    `seed` is reserved for solver variants that draw randomness; the damped
    Newton path is deterministic and ignores it.
    """
    del seed
    numeric, categorical = feature_sets(variant)
    codec = fit_codec(df, numeric, categorical)
    model = fit_hazard(
        df, codec, target=target, lam=lam, max_iter=max_iter, tol=tol, variant=variant
    )
    return calibrate(model, df, row_folds, max_iter=max_iter, tol=tol)


def survival_from_hazard(hazard: np.ndarray, starts: np.ndarray) -> np.ndarray:
    """Per-row survival S(t) = prod_{k<=t} (1 - h_k) within each enrollment.

    Hazards exactly 1 are clamped to 1 - 1e-12 with a warning so survival
    stays positive; values outside [0, 1] are contract violations.
    """
    h = np.asarray(hazard, dtype=np.float64)
    if (h < 0).any() or (h > 1).any():
        raise ContractViolation("hazards must lie in [0, 1]")
    if (h >= 1.0).any():
        warnings.warn("hazard values of 1 clamped to 1 - 1e-12", stacklevel=2)
        h = np.minimum(h, 1.0 - 1e-12)
    from .panel import cumprod_by_segment

    return cumprod_by_segment(1.0 - h, starts)


def survival_grid(survival_rows: np.ndarray, starts: np.ndarray, n_weeks: int) -> np.ndarray:
    """(n_enrollments, n_weeks) survival matrix with LOCF past each support."""
    return locf_grid(survival_rows, starts, n_weeks)
