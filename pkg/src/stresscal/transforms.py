"""Feature engineering: skew-triggered power transforms, robust scaling,
class rebalancing and importance-based feature selection."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .dataio import FeatureTable
from .errors import PolicyError, UsageError

__all__ = [
    "ColumnRecipe",
    "TransformRecipe",
    "skewness",
    "yeo_johnson",
    "yeo_johnson_loglik",
    "fit_yeo_johnson",
    "fit_robust_scaler",
    "robust_scale",
    "choose_transform",
    "apply_transform_policy",
    "apply_recipe",
    "rebalance",
    "select_features",
    "DEFAULT_SKEW_THRESHOLD",
]

DEFAULT_SKEW_THRESHOLD = 0.75
LAMBDA_RANGE = (-5.0, 5.0)
LAMBDA_TOL = 1e-4
_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


def skewness(x) -> float:
    """Population skewness (standardized third central moment); 0 for constant input."""
    x = np.asarray(x, dtype=float)
    d = x - x.mean()
    sd = float(np.sqrt(np.mean(d * d)))
    if not sd > 0.0 or np.ptp(x) == 0.0:
        return 0.0
    z = d / sd  # standardize first so tiny scales cannot underflow
    return float(np.mean(z**3))


def yeo_johnson(y, lmbda: float):
    """Yeo-Johnson power transform; accepts scalars or arrays."""
    y = np.asarray(y, dtype=float)
    out = np.empty_like(y)
    pos = y >= 0
    neg = ~pos
    yp, yn = y[pos], y[neg]
    with np.errstate(over="ignore"):
        if abs(lmbda) < 1e-12:
            out[pos] = np.log1p(yp)
        else:
            out[pos] = np.expm1(lmbda * np.log1p(yp)) / lmbda
        if abs(lmbda - 2.0) < 1e-12:
            out[neg] = -np.log1p(-yn)
        else:
            out[neg] = -np.expm1((2.0 - lmbda) * np.log1p(-yn)) / (2.0 - lmbda)
    return float(out) if out.ndim == 0 else out


def yeo_johnson_loglik(x: np.ndarray, lmbda: float) -> float:
    """Profile Gaussian log-likelihood of the transformed sample, Jacobian included."""
    x = np.asarray(x, dtype=float)
    t = yeo_johnson(x, lmbda)
    if not np.isfinite(t).all():
        return -np.inf
    var = float(np.var(t))
    if not var > 0 or not math.isfinite(var):
        return -np.inf
    n = x.size
    return -0.5 * n * math.log(var) + (lmbda - 1.0) * float(np.sum(np.sign(x) * np.log1p(np.abs(x))))


def fit_yeo_johnson(x, bounds: tuple[float, float] = LAMBDA_RANGE, tol: float = LAMBDA_TOL) -> float:
    """Maximum-likelihood lambda by golden-section search on ``bounds``."""
    x = np.asarray(x, dtype=float)
    if x.size < 3:
        raise UsageError("Yeo-Johnson fitting needs at least 3 values")
    if np.ptp(x) == 0.0:
        warnings.warn("zero-variance column: Yeo-Johnson lambda set to 1 (identity)", RuntimeWarning, stacklevel=2)
        return 1.0
    a, b = bounds
    c = b - _INV_PHI * (b - a)
    d = a + _INV_PHI * (b - a)
    fc = yeo_johnson_loglik(x, c)
    fd = yeo_johnson_loglik(x, d)
    while b - a > tol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - _INV_PHI * (b - a)
            fc = yeo_johnson_loglik(x, c)
        else:
            a, c, fc = c, d, fd
            d = a + _INV_PHI * (b - a)
            fd = yeo_johnson_loglik(x, d)
    return 0.5 * (a + b)


# ---------------------------------------------------------------------------
# robust scaling


def fit_robust_scaler(x) -> tuple[float, float, float]:
    """``(median, q1, q3)`` with linear interpolation between order statistics."""
    q1, med, q3 = np.quantile(np.asarray(x, dtype=float), [0.25, 0.5, 0.75], method="linear")
    return float(med), float(q1), float(q3)


def robust_scale(x, median: float, q1: float, q3: float):
    """``(x - median) / (q3 - q1)``; a degenerate IQR only removes the median."""
    x = np.asarray(x, dtype=float)
    iqr = q3 - q1
    out = (x - median) / iqr if iqr > 0 else x - median
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# per-column recipes


@dataclass(frozen=True)
class ColumnRecipe:
    transform: str  # none | log | sqrt | yeo-johnson
    lmbda: float | None
    median: float
    q1: float
    q3: float

    def to_dict(self) -> dict:
        return {"transform": self.transform, "lambda": self.lmbda, "median": self.median, "q1": self.q1, "q3": self.q3}

    @classmethod
    def from_dict(cls, d: dict) -> "ColumnRecipe":
        return cls(d["transform"], d.get("lambda"), d["median"], d["q1"], d["q3"])


@dataclass(frozen=True)
class TransformRecipe:
    """Per-feature transform and scaler parameters, fitted on training rows."""

    feature_names: tuple[str, ...]
    columns: tuple[ColumnRecipe, ...]
    skew_threshold: float = DEFAULT_SKEW_THRESHOLD
    scale: bool = True

    def __getitem__(self, name: str) -> ColumnRecipe:
        return self.columns[self.feature_names.index(name)]

    def to_dict(self) -> dict:
        return {
            "feature_names": list(self.feature_names),
            "columns": [c.to_dict() for c in self.columns],
            "skew_threshold": self.skew_threshold,
            "scale": self.scale,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TransformRecipe":
        return cls(
            tuple(d["feature_names"]),
            tuple(ColumnRecipe.from_dict(c) for c in d["columns"]),
            d.get("skew_threshold", DEFAULT_SKEW_THRESHOLD),
            d.get("scale", True),
        )


def choose_transform(x: np.ndarray, threshold: float = DEFAULT_SKEW_THRESHOLD) -> tuple[str, float | None]:
    """Pick the single transform for a column: none, log, sqrt or Yeo-Johnson."""
    if abs(skewness(x)) <= threshold:
        return "none", None
    if (x > 0).all():
        return "log", None
    if (x >= 0).all():
        return "sqrt", None
    return "yeo-johnson", fit_yeo_johnson(x)


def _transform_column(x: np.ndarray, kind: str, lmbda: float | None) -> np.ndarray:
    if kind == "none":
        return x.astype(float, copy=True)
    if kind == "log":
        # unseen rows may fall outside the fitted domain
        return np.log1p(np.maximum(x, 0.0))
    if kind == "sqrt":
        return np.sqrt(np.maximum(x, 0.0))
    if kind == "yeo-johnson":
        return yeo_johnson(x, lmbda)
    raise UsageError(f"unknown transform {kind!r}")


def apply_transform_policy(
    table: FeatureTable, skew_threshold: float = DEFAULT_SKEW_THRESHOLD, scale: bool = True
) -> tuple[FeatureTable, TransformRecipe]:
    """Fit a recipe column by column on ``table`` and return the transformed table."""
    cols, out = [], np.empty_like(table.X)
    for j in range(table.n_features):
        x = table.X[:, j]
        kind, lam = choose_transform(x, skew_threshold)
        t = _transform_column(x, kind, lam)
        if not np.isfinite(t).all():
            warnings.warn(f"{table.feature_names[j]}: {kind} overflowed; column left untransformed", RuntimeWarning)
            kind, lam, t = "none", None, x.astype(float, copy=True)
        med, q1, q3 = fit_robust_scaler(t) if scale else (0.0, 0.0, 1.0)
        if scale and not q3 > q1:
            warnings.warn(f"{table.feature_names[j]}: degenerate IQR, only the median is removed", RuntimeWarning)
        cols.append(ColumnRecipe(kind, lam, med, q1, q3))
        out[:, j] = robust_scale(t, med, q1, q3)
    recipe = TransformRecipe(tuple(table.feature_names), tuple(cols), skew_threshold, scale)
    return table.with_features(out, table.feature_names), recipe


def apply_recipe(table: FeatureTable, recipe: TransformRecipe) -> FeatureTable:
    """Transform ``table`` with parameters fitted elsewhere."""
    table = table.select_columns(recipe.feature_names)
    out = np.empty_like(table.X)
    for j, c in enumerate(recipe.columns):
        t = _transform_column(table.X[:, j], c.transform, c.lmbda)
        out[:, j] = robust_scale(t, c.median, c.q1, c.q3)
    return table.with_features(out, table.feature_names)


# ---------------------------------------------------------------------------
# rebalancing and selection


def rebalance(table: FeatureTable, seed: int) -> FeatureTable:
    """Randomly undersample every class to the minority-class count.

    Kept rows stay in their original order.
    """
    if table.task_kind != "classification" and not len(table.label_set):
        raise UsageError("rebalancing needs class labels")
    codes = table.label_codes()
    present = np.unique(codes)
    counts = {c: int(np.count_nonzero(codes == c)) for c in present}
    n_min = min(counts.values())
    rng = np.random.default_rng(seed)
    keep = []
    for c in present:
        idx = np.flatnonzero(codes == c)
        keep.append(idx if idx.size == n_min else rng.choice(idx, size=n_min, replace=False))
    return table.take(np.sort(np.concatenate(keep)))


def select_features(
    importances,
    feature_names: Sequence[str],
    top_k: int | None = None,
    min_importance: float | None = None,
) -> list[str]:
    """Features ordered by descending importance, cut by ``top_k`` and/or ``min_importance``.

    Ties keep the original column order.
    """
    imp = np.asarray(importances, dtype=float)
    if imp.shape != (len(feature_names),):
        raise UsageError("importances and feature names differ in length")
    order = np.argsort(-imp, kind="stable")
    if min_importance is not None:
        order = order[imp[order] >= min_importance]
    if top_k is not None:
        if top_k < 1:
            raise PolicyError("top_k must be at least 1")
        order = order[:top_k]
    if order.size == 0:
        raise PolicyError("feature selection policy kept no features")
    return [feature_names[i] for i in order]
