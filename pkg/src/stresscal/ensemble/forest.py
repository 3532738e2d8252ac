"""Random Forest and Extremely Randomized Trees built on the compiled CART kernels."""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, replace
from typing import Sequence

import numpy as np

from ..dataio import FeatureTable
from ..errors import ShapeError, UsageError
from . import _kernels

__all__ = [
    "EnsembleHyperparams",
    "DecisionTree",
    "TrainedEnsemble",
    "gini_impurity",
    "tree_key",
    "fit_tree",
    "fit_forest",
    "fit_forest_arrays",
    "predict",
    "predict_codes",
    "feature_importances",
]

ALGORITHMS = ("random_forest", "extra_trees")
_ALIASES = {"rf": "random_forest", "randomforest": "random_forest", "et": "extra_trees", "extratrees": "extra_trees"}


def _canonical_algorithm(name: str) -> str:
    key = name.lower().replace("-", "_")
    key = _ALIASES.get(key.replace("_", ""), key)
    if key not in ALGORITHMS:
        raise UsageError(f"unknown algorithm {name!r}; expected one of {ALGORITHMS}")
    return key


@dataclass(frozen=True)
class EnsembleHyperparams:
    """Forest hyperparameters.

    Use :meth:`defaults` for the shipped settings: 1000 trees of depth 2
    with bootstrap for random forests, 1000 unbootstrapped trees of depth
    16 for extra trees. ``max_features`` of None means sqrt(p) for
    classification and p/3 for regression.
    """

    algorithm: str = "random_forest"
    task: str = "classification"
    n_trees: int = 1000
    max_depth: int = 2
    max_features: int | float | None = None
    bootstrap: bool = True
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "algorithm", _canonical_algorithm(self.algorithm))
        if self.task not in ("classification", "regression"):
            raise UsageError(f"task must be 'classification' or 'regression', got {self.task!r}")
        if self.n_trees < 1:
            raise UsageError("n_trees must be at least 1")
        if self.max_depth < 1:
            raise UsageError("max_depth must be at least 1")
        if not 0 <= int(self.seed) < 2**64:
            raise UsageError("seed must fit in an unsigned 64-bit integer")

    @classmethod
    def defaults(cls, algorithm: str = "random_forest", task: str = "classification", **overrides) -> "EnsembleHyperparams":
        algorithm = _canonical_algorithm(algorithm)
        if algorithm == "random_forest":
            base = cls(algorithm, task, n_trees=1000, max_depth=2, bootstrap=True)
        else:
            base = cls(algorithm, task, n_trees=1000, max_depth=16, bootstrap=False)
        return replace(base, **overrides)

    def resolve_max_features(self, p: int) -> int:
        if p < 1:
            raise UsageError("no features")
        mf = self.max_features
        if mf is None:
            rule = math.sqrt(p) if self.task == "classification" else p / 3.0
        elif isinstance(mf, float) and 0 < mf <= 1:
            rule = mf * p
        else:
            rule = float(mf)
        return int(min(p, max(1, math.floor(rule + 0.5))))

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "EnsembleHyperparams":
        return cls(**d)


def gini_impurity(proportions) -> float:
    """Sum of p_k (1 - p_k) over classes."""
    p = np.asarray(proportions, dtype=float)
    return float(np.sum(p * (1.0 - p)))


def tree_key(seed: int, tree_index: int) -> int:
    """64-bit stream key for one tree, hashed from (seed, tree index)."""
    return int(np.random.SeedSequence([int(seed), int(tree_index)]).generate_state(1, np.uint64)[0])


@dataclass
class DecisionTree:
    """Flat-array binary tree. ``feature == -1`` marks a leaf.

    Leaf ``value`` is the modal class code (classification) or the mean
    target (regression).
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    n_node_samples: np.ndarray
    importance: np.ndarray

    @property
    def node_count(self) -> int:
        return self.feature.size

    @property
    def n_internal(self) -> int:
        return int(np.count_nonzero(self.feature >= 0))

    def depth(self) -> int:
        best, stack = 0, [(0, 0)]
        while stack:
            node, d = stack.pop()
            best = max(best, d)
            if self.feature[node] >= 0:
                stack += [(int(self.left[node]), d + 1), (int(self.right[node]), d + 1)]
        return best

    def apply_one(self, x: np.ndarray) -> float:
        node = 0
        while self.feature[node] >= 0:
            node = self.left[node] if x[self.feature[node]] <= self.threshold[node] else self.right[node]
        return float(self.value[node])

    def structure(self) -> tuple:
        return tuple(a.tobytes() for a in (self.feature, self.threshold, self.left, self.right, self.value))

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict, n_features: int) -> "DecisionTree":
        return cls(
            np.asarray(d["feature"], dtype=np.int64),
            np.asarray(d["threshold"], dtype=float),
            np.asarray(d["left"], dtype=np.int64),
            np.asarray(d["right"], dtype=np.int64),
            np.asarray(d["value"], dtype=float),
            np.zeros(len(d["feature"]), dtype=np.int64),
            np.zeros(n_features),
        )


def presort(X: np.ndarray) -> np.ndarray:
    """Ascending row order of every column, column-major."""
    return np.asfortranarray(np.argsort(X, axis=0, kind="stable").astype(np.int64))


def fit_tree(
    X: np.ndarray,
    y: np.ndarray,
    hyper: EnsembleHyperparams,
    key: int,
    n_classes: int = 0,
    sample_idx: np.ndarray | None = None,
    presorted: np.ndarray | None = None,
) -> DecisionTree:
    """Grow a single tree; ``y`` holds class codes when ``n_classes`` > 0.

    ``presorted`` (column-wise ascending row order of ``X``) may be passed
    to share the sort across the trees of a forest.
    """
    X = np.asfortranarray(X, dtype=float)
    y = np.ascontiguousarray(y, dtype=float)
    if X.ndim != 2 or X.shape[0] != y.size:
        raise ShapeError(f"X shape {X.shape} incompatible with {y.size} targets")
    if X.shape[0] < 1:
        raise UsageError("cannot grow a tree on zero rows")
    mtry = hyper.resolve_max_features(X.shape[1])
    idx = np.zeros(0, dtype=np.int64) if sample_idx is None else np.asarray(sample_idx, dtype=np.int64)
    if hyper.algorithm == "extra_trees":
        presorted = np.zeros((0, X.shape[1]), dtype=np.int64, order="F")
    elif presorted is None:
        presorted = presort(X)
    out = _kernels.grow_tree(
        X,
        y,
        int(n_classes),
        int(hyper.max_depth),
        int(mtry),
        hyper.algorithm == "extra_trees",
        bool(hyper.bootstrap),
        np.uint64(key),
        idx,
        presorted,
    )
    return DecisionTree(*out)


@dataclass
class TrainedEnsemble:
    hyperparams: EnsembleHyperparams
    trees: list[DecisionTree]
    feature_names: list[str]
    label_set: tuple[str, ...] | None
    target_range: tuple[float, float] | None
    importances: np.ndarray

    def __post_init__(self):
        self._flat = None

    @property
    def is_classifier(self) -> bool:
        return self.hyperparams.task == "classification"

    @property
    def n_classes(self) -> int:
        return len(self.label_set) if self.is_classifier else 0

    def flat(self):
        if self._flat is None:
            sizes = np.array([t.node_count for t in self.trees], dtype=np.int64)
            offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
            cat = lambda name: np.ascontiguousarray(np.concatenate([getattr(t, name) for t in self.trees]))  # noqa: E731
            self._flat = (offsets, cat("feature"), cat("threshold"), cat("left"), cat("right"), cat("value"))
        return self._flat

    def to_dict(self) -> dict:
        return {
            "hyperparams": self.hyperparams.to_dict(),
            "feature_names": list(self.feature_names),
            "label_set": None if self.label_set is None else list(self.label_set),
            "target_range": None if self.target_range is None else list(self.target_range),
            "importances": self.importances.tolist(),
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainedEnsemble":
        names = list(d["feature_names"])
        return cls(
            hyperparams=EnsembleHyperparams.from_dict(d["hyperparams"]),
            trees=[DecisionTree.from_dict(t, len(names)) for t in d["trees"]],
            feature_names=names,
            label_set=None if d["label_set"] is None else tuple(d["label_set"]),
            target_range=None if d["target_range"] is None else tuple(d["target_range"]),
            importances=np.asarray(d["importances"], dtype=float),
        )


def _run(fn, items, n_jobs: int):
    if n_jobs is None or n_jobs <= 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(n_jobs) as pool:
        return list(pool.map(fn, items))


def fit_forest_arrays(
    X: np.ndarray,
    y: np.ndarray,
    hyper: EnsembleHyperparams,
    feature_names: Sequence[str],
    label_set: Sequence[str] | None = None,
    n_jobs: int = 1,
) -> TrainedEnsemble:
    """Fit a forest on a feature matrix; ``y`` are class codes into ``label_set`` for classification."""
    X = np.asfortranarray(X, dtype=float)  # column gathers dominate split search
    y = np.ascontiguousarray(y, dtype=float).reshape(-1)
    if X.ndim != 2 or X.shape[0] != y.size or X.shape[1] != len(feature_names):
        raise ShapeError(f"X shape {X.shape} incompatible with {y.size} targets / {len(feature_names)} names")
    if X.shape[0] == 0:
        raise UsageError("cannot fit a forest on an empty table")
    if hyper.task == "classification":
        if label_set is None:
            raise UsageError("classification needs a label set")
        n_classes = len(label_set)
        if np.unique(y).size < 2:
            warnings.warn("single-class training data: the model is a constant predictor", RuntimeWarning, stacklevel=2)
        target_range = None
    else:
        n_classes = 0
        target_range = (float(y.min()), float(y.max()))

    order = presort(X) if hyper.algorithm == "random_forest" else None

    def grow(t):
        return fit_tree(X, y, hyper, tree_key(hyper.seed, t), n_classes, presorted=order)

    trees = _run(grow, range(hyper.n_trees), n_jobs)
    total = np.zeros(X.shape[1])
    for tr in trees:  # fixed-order reduction
        total += tr.importance
    total /= len(trees)
    s = total.sum()
    if s > 0:
        importances = total / s
    else:
        warnings.warn("no tree made any split; importances are all zero", RuntimeWarning, stacklevel=2)
        importances = total
    return TrainedEnsemble(
        hyperparams=hyper,
        trees=trees,
        feature_names=list(feature_names),
        label_set=None if label_set is None or hyper.task != "classification" else tuple(label_set),
        target_range=target_range,
        importances=importances,
    )


def fit_forest(table: FeatureTable, hyper: EnsembleHyperparams, n_jobs: int = 1) -> TrainedEnsemble:
    """Fit a forest on a feature table (labels for classification, targets for regression)."""
    if table.task_kind != hyper.task:
        table = table.with_task(hyper.task)
    return fit_forest_arrays(table.X, table.response(), hyper, table.feature_names, table.label_set, n_jobs)


def _as_matrix(model: TrainedEnsemble, X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    if X.ndim != 2 or X.shape[1] != len(model.feature_names):
        raise ShapeError(f"expected {len(model.feature_names)} features per row, got shape {X.shape}")
    return np.ascontiguousarray(X)


def predict_codes(model: TrainedEnsemble, X, n_jobs: int = 1) -> np.ndarray:
    """Class codes (classification) or real predictions (regression) for each row of ``X``."""
    X = _as_matrix(model, X)
    offsets, feature, threshold, left, right, value = model.flat()
    out = np.empty(X.shape[0])
    chunks = [(a, min(a + 2048, X.shape[0])) for a in range(0, X.shape[0], 2048)]

    def work(bounds):
        a, b = bounds
        _kernels.aggregate_predictions(X[a:b], offsets, feature, threshold, left, right, value, model.n_classes, out[a:b])

    _run(work, chunks, n_jobs)
    if model.is_classifier:
        return out.astype(np.int64)
    lo, hi = model.target_range
    return np.clip(out, lo, hi)


def predict(model: TrainedEnsemble, x, n_jobs: int = 1):
    """Predict one feature vector (returns a label or a float) or a matrix (returns an array)."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    codes = predict_codes(model, x, n_jobs)
    if model.is_classifier:
        labels = np.asarray(model.label_set, dtype=object)[codes]
        return labels[0] if single else labels
    return float(codes[0]) if single else codes


def feature_importances(model: TrainedEnsemble) -> np.ndarray:
    """Normalized mean-decrease-in-impurity importances."""
    return model.importances.copy()
