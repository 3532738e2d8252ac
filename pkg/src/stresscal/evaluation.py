"""Evaluation protocols: person-specific k-fold CV, leave-one-subject-out CV,
model calibration with person-specific samples, and the subject-id probe."""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .dataio import FeatureTable
from .ensemble import EnsembleHyperparams, TrainedEnsemble, fit_forest, predict_codes
from .errors import ContaminationError, ProtocolError, ShapeError, UsageError
from .transforms import apply_recipe, apply_transform_policy

log = logging.getLogger(__name__)

__all__ = [
    "Metrics",
    "UnitResult",
    "EvaluationReport",
    "CalibrationConfig",
    "CalibrationPoint",
    "CalibrationCurve",
    "ProbeResult",
    "classification_metrics",
    "regression_metrics",
    "kfold_indices",
    "kfold_person_specific",
    "person_specific",
    "loso_generic",
    "calibrate_model",
    "calibration_sweep",
    "subject_id_probe",
]

CLASSIFICATION_METRICS = ("accuracy", "precision", "recall", "f1")
REGRESSION_METRICS = ("mae", "rmse")


# ---------------------------------------------------------------------------
# metrics


@dataclass(frozen=True)
class Metrics:
    values: dict

    def __getitem__(self, name: str) -> float:
        return self.values[name]

    def __getattr__(self, name):
        try:
            return self.__dict__["values"][name]
        except KeyError:
            raise AttributeError(name) from None

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(self.values)

    def to_dict(self) -> dict:
        return dict(self.values)


def classification_metrics(y_true, y_pred, labels: Sequence) -> Metrics:
    """Accuracy and macro precision/recall over the declared ``labels``.

    Classes with no predictions (or no true rows) contribute 0 to the
    corresponding macro average. ``f1`` is the harmonic mean of the macro
    precision and macro recall.
    """
    y_true = np.asarray(y_true, dtype=object)
    y_pred = np.asarray(y_pred, dtype=object)
    if y_true.shape != y_pred.shape:
        raise ShapeError(f"length mismatch: {y_true.shape[0]} true vs {y_pred.shape[0]} predicted")
    if y_true.size == 0:
        raise ShapeError("no predictions to score")
    precision, recall = [], []
    for lab in labels:
        t = y_true == lab
        p = y_pred == lab
        tp = np.count_nonzero(t & p)
        precision.append(tp / np.count_nonzero(p) if p.any() else 0.0)
        recall.append(tp / np.count_nonzero(t) if t.any() else 0.0)
    P = float(np.mean(precision))
    R = float(np.mean(recall))
    return Metrics(
        {
            "accuracy": float(np.count_nonzero(y_true == y_pred)) / y_true.size,
            "precision": P,
            "recall": R,
            "f1": 2 * P * R / (P + R) if P + R > 0 else 0.0,
        }
    )


def regression_metrics(y_true, y_pred) -> Metrics:
    y_true = np.asarray(y_true, dtype=float)
    y_pred = np.asarray(y_pred, dtype=float)
    if y_true.shape != y_pred.shape:
        raise ShapeError(f"length mismatch: {y_true.shape[0]} true vs {y_pred.shape[0]} predicted")
    if y_true.size == 0:
        raise ShapeError("no predictions to score")
    err = y_pred - y_true
    mae = float(np.mean(np.abs(err)))
    rmse = float(np.sqrt(np.mean(err * err)))
    return Metrics({"mae": mae, "rmse": max(rmse, mae)})


def _score(model: TrainedEnsemble, test: FeatureTable, n_jobs: int = 1) -> tuple[Metrics, np.ndarray]:
    pred = predict_codes(model, test.X, n_jobs)
    if model.is_classifier:
        labels = np.asarray(model.label_set, dtype=object)
        return classification_metrics(test.labels, labels[pred], model.label_set), pred
    return regression_metrics(test.targets, pred), pred


def _aggregate(metrics: Sequence[Metrics]) -> dict:
    if not metrics:
        return {}
    out = {}
    for name in metrics[0].names:
        v = np.array([m[name] for m in metrics], dtype=float)
        out[name] = {"mean": float(v.mean()), "std": float(v.std()), "min": float(v.min()), "max": float(v.max())}
    return out


# ---------------------------------------------------------------------------
# reports


@dataclass
class UnitResult:
    unit: str
    n_train: int
    n_test: int
    metrics: Metrics

    def to_dict(self) -> dict:
        return {"unit": self.unit, "n_train": self.n_train, "n_test": self.n_test, "metrics": self.metrics.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "UnitResult":
        return cls(d["unit"], d["n_train"], d["n_test"], Metrics(dict(d["metrics"])))


@dataclass
class EvaluationReport:
    """Per-unit (fold or subject) metrics with mean/std aggregates."""

    protocol: str
    task: str
    seed: int
    hyperparams: dict
    units: list[UnitResult]
    extra: dict = field(default_factory=dict)

    @property
    def aggregate(self) -> dict:
        return _aggregate([u.metrics for u in self.units])

    def mean(self, metric: str) -> float:
        return self.aggregate[metric]["mean"]

    def std(self, metric: str) -> float:
        return self.aggregate[metric]["std"]

    @property
    def metric_names(self) -> tuple[str, ...]:
        return CLASSIFICATION_METRICS if self.task == "classification" else REGRESSION_METRICS

    def summary(self) -> str:
        parts = [f"{m}={self.mean(m):.4f}+/-{self.std(m):.4f}" for m in self.metric_names]
        return f"{self.protocol} ({len(self.units)} units): " + ", ".join(parts)

    def to_dict(self) -> dict:
        return {
            "kind": "evaluation_report",
            "protocol": self.protocol,
            "task": self.task,
            "seed": self.seed,
            "hyperparams": self.hyperparams,
            "units": [u.to_dict() for u in self.units],
            "aggregate": self.aggregate,
            "extra": self.extra,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EvaluationReport":
        return cls(
            protocol=d["protocol"],
            task=d["task"],
            seed=d["seed"],
            hyperparams=d["hyperparams"],
            units=[UnitResult.from_dict(u) for u in d["units"]],
            extra=d.get("extra", {}),
        )

    def to_rows(self):
        names = self.metric_names
        header = ["unit", "n_train", "n_test", *names]
        rows = [[u.unit, u.n_train, u.n_test, *(float(u.metrics[m]) for m in names)] for u in self.units]
        return header, rows


def _default_hyper(hyper, algorithm: str, task: str) -> EnsembleHyperparams:
    if hyper is None:
        return EnsembleHyperparams.defaults(algorithm, task)
    if hyper.task != task:
        raise UsageError(f"hyperparameters are for {hyper.task} but the table is a {task} table")
    return hyper


def _prepare(train: FeatureTable, test: FeatureTable, skew_threshold: float | None):
    if skew_threshold is None:
        return train, test
    train_t, recipe = apply_transform_policy(train, skew_threshold)
    return train_t, apply_recipe(test, recipe)


# ---------------------------------------------------------------------------
# person-specific and generic protocols


def kfold_indices(n: int, k: int, seed: int) -> list[np.ndarray]:
    """Seeded shuffle of ``range(n)`` split into ``k`` near-equal folds."""
    if k < 2:
        raise ProtocolError("k-fold needs k >= 2")
    if n < k:
        raise ProtocolError(f"{n} rows cannot fill {k} folds")
    perm = np.random.default_rng(seed).permutation(n)
    return [np.sort(f) for f in np.array_split(perm, k)]


def kfold_person_specific(
    table: FeatureTable,
    subject_id: str,
    k: int = 10,
    hyper: EnsembleHyperparams | None = None,
    seed: int = 0,
    skew_threshold: float | None = None,
    n_jobs: int = 1,
) -> EvaluationReport:
    """k-fold CV on the rows of one subject only (Random Forest defaults)."""
    hyper = _default_hyper(hyper, "random_forest", table.task_kind)
    sub = table.for_subject(subject_id)
    if len(sub) < k:
        raise ProtocolError(f"subject {subject_id!r} has {len(sub)} rows, fewer than k={k}")
    folds = kfold_indices(len(sub), k, seed)
    units = []
    for i, test_idx in enumerate(folds):
        train_idx = np.concatenate([f for j, f in enumerate(folds) if j != i])
        train, test = _prepare(sub.take(train_idx), sub.take(test_idx), skew_threshold)
        model = fit_forest(train, hyper, n_jobs)
        m, _ = _score(model, test, n_jobs)
        units.append(UnitResult(f"fold-{i}", len(train_idx), len(test_idx), m))
    return EvaluationReport(
        protocol="kfold",
        task=table.task_kind,
        seed=seed,
        hyperparams=hyper.to_dict(),
        units=units,
        extra={"subject": subject_id, "k": k},
    )


def person_specific(
    table: FeatureTable,
    k: int = 10,
    hyper: EnsembleHyperparams | None = None,
    seed: int = 0,
    skew_threshold: float | None = None,
    n_jobs: int = 1,
) -> EvaluationReport:
    """Person-specific k-fold CV for every subject; one unit per subject (fold means)."""
    hyper = _default_hyper(hyper, "random_forest", table.task_kind)
    units = []
    for s in table.subjects:
        rep = kfold_person_specific(table, s, k, hyper, seed, skew_threshold, n_jobs)
        means = {m: rep.mean(m) for m in rep.metric_names}
        n = int(np.count_nonzero(table.subject_ids == s))
        units.append(UnitResult(s, n, n, Metrics(means)))
    return EvaluationReport(
        protocol="person_specific",
        task=table.task_kind,
        seed=seed,
        hyperparams=hyper.to_dict(),
        units=units,
        extra={"k": k},
    )


def loso_generic(
    table: FeatureTable,
    hyper: EnsembleHyperparams | None = None,
    seed: int = 0,
    skew_threshold: float | None = None,
    n_jobs: int = 1,
) -> EvaluationReport:
    """Leave-one-subject-out CV: train on n-1 subjects, test on the left-out one."""
    hyper = _default_hyper(hyper, "random_forest", table.task_kind)
    subjects = table.subjects
    if len(subjects) < 2:
        raise ProtocolError("leave-one-subject-out needs at least 2 subjects")
    units = []
    for s in subjects:
        mask = table.subject_ids == s
        train, test = _prepare(table.take(~mask), table.take(mask), skew_threshold)
        model = fit_forest(train, hyper, n_jobs)
        m, _ = _score(model, test, n_jobs)
        units.append(UnitResult(s, len(train), len(test), m))
        log.info("LOSO %s: %s", s, m.to_dict())
    return EvaluationReport(
        protocol="loso",
        task=table.task_kind,
        seed=seed,
        hyperparams=hyper.to_dict(),
        units=units,
    )


# ---------------------------------------------------------------------------
# calibration


def calibrate_model(
    generic_rows: FeatureTable,
    calibration_rows: FeatureTable,
    hyper: EnsembleHyperparams | None = None,
    seed: int = 0,
    n_jobs: int = 1,
) -> TrainedEnsemble:
    """Mix person-specific calibration rows into the generic pool, shuffle, and refit.

    Extra-trees defaults are used unless ``hyper`` is given.
    """
    hyper = _default_hyper(hyper, "extra_trees", generic_rows.task_kind)
    overlap = set(generic_rows.subjects) & set(calibration_rows.subjects)
    if overlap:
        raise ContaminationError(f"subjects present in both pools: {sorted(overlap)}")
    mixed = FeatureTable.concat([generic_rows, calibration_rows])
    perm = np.random.default_rng(seed).permutation(len(mixed))
    return fit_forest(mixed.take(perm), hyper, n_jobs)


@dataclass(frozen=True)
class CalibrationConfig:
    q: int = 4
    sizes: tuple[int, ...] = (0, 1, 2, 5, 10, 20, 50, 100)
    calibration_fraction: float = 0.5
    seed: int = 0

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.sizes)
        if any(s < 0 for s in sizes) or list(sizes) != sorted(sizes):
            raise UsageError("calibration sizes must be nonnegative and ascending")
        object.__setattr__(self, "sizes", sizes)
        if self.q < 1:
            raise UsageError("q must be at least 1")
        if not 0 < self.calibration_fraction < 1:
            raise UsageError("calibration_fraction must lie in (0, 1)")

    def to_dict(self) -> dict:
        return {"q": self.q, "sizes": list(self.sizes), "calibration_fraction": self.calibration_fraction, "seed": self.seed}


@dataclass
class CalibrationPoint:
    size: int
    per_subject: dict  # subject -> Metrics
    n_calibration: dict  # subject -> samples actually drawn

    @property
    def aggregate(self) -> dict:
        return _aggregate([self.per_subject[s] for s in sorted(self.per_subject)])

    def mean(self, metric: str) -> float:
        return self.aggregate[metric]["mean"]

    def to_dict(self) -> dict:
        return {
            "size": self.size,
            "per_subject": {s: m.to_dict() for s, m in self.per_subject.items()},
            "n_calibration": dict(self.n_calibration),
            "aggregate": self.aggregate,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CalibrationPoint":
        return cls(d["size"], {s: Metrics(dict(m)) for s, m in d["per_subject"].items()}, dict(d["n_calibration"]))


@dataclass
class CalibrationCurve:
    """Per-size metrics on the held-out subjects' test halves."""

    task: str
    config: dict
    hyperparams: dict
    held_out: list[str]
    baseline: CalibrationPoint
    points: list[CalibrationPoint]
    splits: dict = field(default_factory=dict, repr=False, compare=False)
    predictions: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def sizes(self) -> list[int]:
        return [p.size for p in self.points]

    def point(self, size: int) -> CalibrationPoint:
        for p in self.points:
            if p.size == size:
                return p
        raise KeyError(size)

    @property
    def metric_names(self) -> tuple[str, ...]:
        return CLASSIFICATION_METRICS if self.task == "classification" else REGRESSION_METRICS

    def summary(self) -> str:
        lines = [f"calibration on held-out subjects {', '.join(self.held_out)}"]
        for p in self.points:
            agg = p.aggregate
            lines.append(
                f"  s={p.size:<4d} "
                + ", ".join(f"{m}={agg[m]['mean']:.4f}+/-{agg[m]['std']:.4f}" for m in self.metric_names)
            )
        return "\n".join(lines)

    def to_dict(self) -> dict:
        return {
            "kind": "calibration_curve",
            "task": self.task,
            "config": self.config,
            "hyperparams": self.hyperparams,
            "held_out": list(self.held_out),
            "baseline": self.baseline.to_dict(),
            "points": [p.to_dict() for p in self.points],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CalibrationCurve":
        return cls(
            task=d["task"],
            config=d["config"],
            hyperparams=d["hyperparams"],
            held_out=list(d["held_out"]),
            baseline=CalibrationPoint.from_dict(d["baseline"]),
            points=[CalibrationPoint.from_dict(p) for p in d["points"]],
        )

    def to_rows(self):
        names = self.metric_names
        header = ["size", *(f"{m}_{stat}" for m in names for stat in ("mean", "std"))]
        rows = []
        for p in self.points:
            agg = p.aggregate
            rows.append([p.size, *(float(agg[m][stat]) for m in names for stat in ("mean", "std"))])
        return header, rows


def _subject_seed(seed: int, i: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), 1, int(i)]))


def calibration_sweep(
    table: FeatureTable,
    config: CalibrationConfig = CalibrationConfig(),
    hyper: EnsembleHyperparams | None = None,
    n_jobs: int = 1,
    keep_predictions: bool = False,
) -> CalibrationCurve:
    """Generic-to-calibrated performance curve.

    ``q`` subjects are held out; each one's rows are split at random into a
    calibration pool and a test half. For every size ``s`` the first ``s``
    rows of each (shuffled) pool are mixed into the generic rows of the
    remaining subjects, a fresh model is trained, and it is scored on the
    untouched test halves.
    """
    hyper = _default_hyper(hyper, "extra_trees", table.task_kind)
    subjects = table.subjects
    if config.q >= len(subjects):
        raise ProtocolError(f"q={config.q} must be smaller than the {len(subjects)} subjects")
    rng = np.random.default_rng(np.random.SeedSequence([int(config.seed), 0]))
    held = sorted(str(s) for s in rng.choice(np.asarray(subjects, dtype=object), size=config.q, replace=False))
    held_mask = np.isin(table.subject_ids, held)
    generic = table.take(~held_mask)

    pools, tests = {}, {}
    for i, s in enumerate(held):
        idx = np.flatnonzero(table.subject_ids == s)
        perm = _subject_seed(config.seed, i).permutation(idx)
        n_pool = int(math.floor(config.calibration_fraction * idx.size))
        pools[s], tests[s] = perm[:n_pool], perm[n_pool:]
        if tests[s].size == 0:
            raise ProtocolError(f"subject {s!r} has too few rows to split")

    def evaluate(size: int, clip_warn: bool) -> tuple[CalibrationPoint, dict, dict]:
        cal_idx, drawn = [], {}
        for s in held:
            take = min(size, pools[s].size)
            if take < size and clip_warn:
                warnings.warn(f"subject {s}: calibration size {size} clipped to pool of {pools[s].size}", RuntimeWarning)
            drawn[s] = take
            cal_idx.append(pools[s][:take])
        cal_idx = np.concatenate(cal_idx) if cal_idx else np.zeros(0, dtype=np.int64)
        model = calibrate_model(generic, table.take(cal_idx), hyper, config.seed, n_jobs)
        per_subject, preds = {}, {}
        for s in held:
            m, pred = _score(model, table.take(tests[s]), n_jobs)
            per_subject[s] = m
            preds[s] = pred
        return CalibrationPoint(size, per_subject, drawn), {s: pools[s][: drawn[s]] for s in held}, preds

    baseline, _, base_preds = evaluate(0, False)
    points, cal_sets, predictions = [], {}, {}
    for size in config.sizes:
        if size == 0:
            point, cal, preds = baseline, {s: pools[s][:0] for s in held}, base_preds
        else:
            point, cal, preds = evaluate(size, True)
        points.append(point)
        cal_sets[size] = cal
        if keep_predictions:
            predictions[size] = preds
        log.info("calibration size %d: %s", size, point.aggregate)
    if keep_predictions:
        predictions["baseline"] = base_preds

    return CalibrationCurve(
        task=table.task_kind,
        config=config.to_dict(),
        hyperparams=hyper.to_dict(),
        held_out=held,
        baseline=baseline,
        points=points,
        splits={"pool": pools, "test": tests, "calibration": cal_sets, "generic_subjects": generic.subjects},
        predictions=predictions,
    )


# ---------------------------------------------------------------------------
# subject-id probe


@dataclass
class ProbeResult:
    ranking: list[tuple[str, float]]
    subject_rank: int

    @property
    def importances(self) -> dict:
        return dict(self.ranking)

    def to_dict(self) -> dict:
        return {"kind": "subject_id_probe", "ranking": [[n, v] for n, v in self.ranking], "subject_rank": self.subject_rank}

    def summary(self) -> str:
        return f"subject_id ranks {self.subject_rank} of {len(self.ranking)} features by MDI"

    @classmethod
    def from_dict(cls, d: dict) -> "ProbeResult":
        return cls([(n, float(v)) for n, v in d["ranking"]], int(d["subject_rank"]))

    def to_rows(self):
        return ["rank", "feature", "importance"], [[i + 1, n, float(v)] for i, (n, v) in enumerate(self.ranking)]


def subject_id_probe(
    table: FeatureTable, hyper: EnsembleHyperparams | None = None, n_jobs: int = 1
) -> ProbeResult:
    """Append integer-coded subject ids as a feature and rank all features by MDI."""
    hyper = _default_hyper(hyper, "random_forest", table.task_kind)
    subjects = table.subjects
    if len(subjects) < 2:
        raise ProtocolError("the subject-id probe needs at least 2 subjects")
    if "subject_id" in table.feature_names:
        raise UsageError("table already has a 'subject_id' feature column")
    code = {s: i for i, s in enumerate(subjects)}
    ids = np.array([code[str(s)] for s in table.subject_ids], dtype=float)
    probe = table.with_features(np.column_stack([table.X, ids]), [*table.feature_names, "subject_id"])
    model = fit_forest(probe, hyper, n_jobs)
    order = np.argsort(-model.importances, kind="stable")
    ranking = [(probe.feature_names[i], float(model.importances[i])) for i in order]
    rank = 1 + [n for n, _ in ranking].index("subject_id")
    return ProbeResult(ranking, rank)
