"""Ingestion of feature tables and raw signals, persistence of models and reports.

Feature tables are CSV files with a header row. Because the published
feature exports use different column names per dataset, a small sidecar
schema file maps roles to column names::

    subject = subject_id
    label = condition
    target = NASA_TLX
    features = MEAN_RR, RMSSD, HF
    labels = no stress, time pressure, interruption

``features = *`` takes every column not bound to another role. ``labels``
is optional and fixes the declared label order (used for vote tie-breaks);
without it labels are sorted.
"""

from __future__ import annotations

import csv
import gzip
import io
import json
import math
import os
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any, Iterator, Mapping, Sequence

import numpy as np

from .errors import (
    EmptyInputError,
    IncompatibleFormatError,
    ParseError,
    SchemaError,
    UsageError,
)

if TYPE_CHECKING:
    from .ensemble import TrainedEnsemble
    from .transforms import TransformRecipe

__all__ = [
    "FeatureRow",
    "FeatureTable",
    "Schema",
    "SignalRecording",
    "ModelArtifact",
    "MODEL_FORMAT_VERSION",
    "load_schema",
    "load_feature_table",
    "write_feature_table",
    "load_signal_recording",
    "save_model",
    "load_model",
    "write_report",
    "dumps_canonical",
    "format_float",
]

MODEL_FORMAT_VERSION = 1

TASK_KINDS = ("classification", "regression")
SIGNAL_UNITS = {"ECG": "mV", "EDA": "uS"}


# ---------------------------------------------------------------------------
# canonical number / JSON formatting


def format_float(x: float) -> str:
    """Format a float with 17 significant digits (exact round trip)."""
    x = float(x)
    if not math.isfinite(x):
        raise ValueError(f"cannot serialize non-finite value {x!r}")
    s = "%.17g" % x
    if s == "-0":
        s = "-0.0"
    if "e" not in s and "." not in s and "n" not in s:
        s += ".0"
    return s


def _encode(obj: Any, indent: int | None, level: int) -> str:
    if obj is None:
        return "null"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return format_float(obj)
    if isinstance(obj, str):
        return json.dumps(obj, ensure_ascii=False)
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    if isinstance(obj, Mapping):
        if not obj:
            return "{}"
        keys = sorted(obj, key=str)
        if indent is None:
            return "{" + ", ".join(
                f"{json.dumps(str(k), ensure_ascii=False)}: {_encode(obj[k], None, 0)}" for k in keys
            ) + "}"
        pad = " " * (indent * (level + 1))
        body = ",\n".join(
            f"{pad}{json.dumps(str(k), ensure_ascii=False)}: {_encode(obj[k], indent, level + 1)}"
            for k in keys
        )
        return "{\n" + body + "\n" + " " * (indent * level) + "}"
    if isinstance(obj, (list, tuple)):
        # lists stay on one line unless they hold mappings
        if indent is not None and any(isinstance(v, Mapping) for v in obj):
            pad = " " * (indent * (level + 1))
            body = ",\n".join(pad + _encode(v, indent, level + 1) for v in obj)
            return "[\n" + body + "\n" + " " * (indent * level) + "]"
        return "[" + ", ".join(_encode(v, None, 0) for v in obj) + "]"
    raise TypeError(f"cannot serialize object of type {type(obj).__name__}")


def dumps_canonical(obj: Any, indent: int | None = 2) -> str:
    """Deterministic JSON: sorted keys, floats at 17 significant digits."""
    return _encode(obj, indent, 0) + "\n"


# ---------------------------------------------------------------------------
# signal recordings


@dataclass(frozen=True)
class SignalRecording:
    """Uniformly sampled ECG or EDA signal."""

    kind: str
    sample_rate_hz: float
    samples: np.ndarray
    units: str = ""

    def __post_init__(self):
        kind = self.kind.upper()
        if kind not in SIGNAL_UNITS:
            raise UsageError(f"unknown signal kind {self.kind!r}; expected ECG or EDA")
        object.__setattr__(self, "kind", kind)
        if not self.sample_rate_hz > 0:
            raise UsageError(f"sample_rate_hz must be positive, got {self.sample_rate_hz}")
        samples = np.ascontiguousarray(self.samples, dtype=float)
        if samples.ndim != 1 or samples.size == 0:
            raise EmptyInputError("signal recording has no samples")
        object.__setattr__(self, "samples", samples)
        if not self.units:
            object.__setattr__(self, "units", SIGNAL_UNITS[kind])

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.sample_rate_hz

    def __len__(self) -> int:
        return self.samples.size

    def replace_samples(self, samples: np.ndarray) -> "SignalRecording":
        return SignalRecording(self.kind, self.sample_rate_hz, samples, self.units)


def load_signal_recording(path: str | os.PathLike, kind: str, sample_rate_hz: float) -> SignalRecording:
    """Read a single-column numeric file into a :class:`SignalRecording`.

    Blank lines are ignored. Any non-numeric or NaN entry raises
    :class:`ParseError` naming its 1-based line number.
    """
    values = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            cell = line.strip()
            if not cell:
                continue
            if "," in cell:
                cell = cell.split(",")[0].strip()
            try:
                v = float(cell)
            except ValueError:
                raise ParseError(f"{path}: line {lineno}: not a number: {cell!r}") from None
            if not math.isfinite(v):
                raise ParseError(f"{path}: line {lineno}: non-finite sample {cell!r}")
            values.append(v)
    if not values:
        raise EmptyInputError(f"{path}: no samples")
    return SignalRecording(kind, float(sample_rate_hz), np.asarray(values))


# ---------------------------------------------------------------------------
# feature tables


@dataclass(frozen=True)
class FeatureRow:
    subject_id: str
    condition_label: str
    target: float
    features: np.ndarray


@dataclass
class FeatureTable:
    """Column-oriented feature table.

    ``X`` holds one row per window and one column per entry of
    ``feature_names``. ``labels`` are condition labels drawn from
    ``label_set`` (whose order is the declared order); ``targets`` are the
    self-report scores used for regression.
    """

    subject_ids: np.ndarray
    labels: np.ndarray
    targets: np.ndarray
    X: np.ndarray
    feature_names: list[str]
    label_set: tuple[str, ...] = ()
    task_kind: str = "classification"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.subject_ids = np.asarray(self.subject_ids, dtype=object)
        self.labels = np.asarray(self.labels, dtype=object)
        self.targets = np.asarray(self.targets, dtype=float).reshape(-1)
        n = self.subject_ids.shape[0]
        X = np.asarray(self.X, dtype=float)
        if X.size == 0:
            X = X.reshape(n, len(self.feature_names))
        self.X = np.ascontiguousarray(X)
        self.feature_names = [str(f) for f in self.feature_names]
        if self.X.ndim != 2 or self.X.shape != (n, len(self.feature_names)):
            raise SchemaError(
                f"feature matrix shape {self.X.shape} does not match {n} rows x "
                f"{len(self.feature_names)} features"
            )
        if self.labels.shape[0] != n or self.targets.shape[0] != n:
            raise SchemaError("subject, label and target columns differ in length")
        if len(set(self.feature_names)) != len(self.feature_names):
            raise SchemaError("duplicate feature names")
        if self.task_kind not in TASK_KINDS:
            raise UsageError(f"task_kind must be one of {TASK_KINDS}")
        if not self.label_set:
            self.label_set = tuple(sorted({str(v) for v in self.labels}))
        else:
            self.label_set = tuple(str(v) for v in self.label_set)
            unknown = {str(v) for v in self.labels} - set(self.label_set)
            if unknown:
                raise SchemaError(f"labels not in declared label set: {sorted(unknown)}")
        if n and not np.isfinite(self.X).all():
            raise ParseError("feature table contains non-finite values")
        if n and not np.isfinite(self.targets).all():
            raise ParseError("feature table contains non-finite targets")
        if any(not str(s) for s in self.subject_ids):
            raise SchemaError("empty subject id")

    # -- basic accessors -------------------------------------------------

    def __len__(self) -> int:
        return self.X.shape[0]

    @property
    def n_features(self) -> int:
        return self.X.shape[1]

    @property
    def rows(self) -> Iterator[FeatureRow]:
        for i in range(len(self)):
            yield FeatureRow(str(self.subject_ids[i]), str(self.labels[i]), float(self.targets[i]), self.X[i])

    @property
    def subjects(self) -> list[str]:
        """Distinct subject ids, sorted."""
        return sorted({str(s) for s in self.subject_ids})

    def label_codes(self) -> np.ndarray:
        index = {lab: i for i, lab in enumerate(self.label_set)}
        return np.fromiter((index[str(v)] for v in self.labels), dtype=np.int64, count=len(self))

    def response(self) -> np.ndarray:
        """Label codes for classification tables, targets for regression."""
        if self.task_kind == "classification":
            return self.label_codes().astype(float)
        return self.targets.copy()

    # -- derivation ------------------------------------------------------

    def _derive(self, **changes) -> "FeatureTable":
        fields_ = dict(
            subject_ids=self.subject_ids,
            labels=self.labels,
            targets=self.targets,
            X=self.X,
            feature_names=self.feature_names,
            label_set=self.label_set,
            task_kind=self.task_kind,
            meta=dict(self.meta),
        )
        fields_.update(changes)
        return FeatureTable(**fields_)

    def take(self, index) -> "FeatureTable":
        index = np.asarray(index)
        if index.dtype == bool:
            index = np.flatnonzero(index)
        index = index.astype(np.int64)
        return self._derive(
            subject_ids=self.subject_ids[index],
            labels=self.labels[index],
            targets=self.targets[index],
            X=self.X[index],
        )

    def for_subject(self, subject_id: str) -> "FeatureTable":
        return self.take(self.subject_ids == subject_id)

    def with_task(self, task_kind: str) -> "FeatureTable":
        return self._derive(task_kind=task_kind)

    def with_features(self, X: np.ndarray, feature_names: Sequence[str]) -> "FeatureTable":
        return self._derive(X=X, feature_names=list(feature_names))

    def select_columns(self, names: Sequence[str]) -> "FeatureTable":
        pos = {n: i for i, n in enumerate(self.feature_names)}
        missing = [n for n in names if n not in pos]
        if missing:
            raise SchemaError(f"unknown feature column(s): {missing}")
        idx = [pos[n] for n in names]
        return self.with_features(self.X[:, idx], names)

    @staticmethod
    def concat(tables: Sequence["FeatureTable"]) -> "FeatureTable":
        if not tables:
            raise EmptyInputError("nothing to concatenate")
        first = tables[0]
        for t in tables[1:]:
            if t.feature_names != first.feature_names:
                raise SchemaError("cannot concatenate tables with different feature columns")
        label_set = list(first.label_set)
        for t in tables[1:]:
            label_set += [lab for lab in t.label_set if lab not in label_set]
        return FeatureTable(
            subject_ids=np.concatenate([t.subject_ids for t in tables]),
            labels=np.concatenate([t.labels for t in tables]),
            targets=np.concatenate([t.targets for t in tables]),
            X=np.vstack([t.X for t in tables]),
            feature_names=first.feature_names,
            label_set=tuple(label_set),
            task_kind=first.task_kind,
            meta=dict(first.meta),
        )


@dataclass(frozen=True)
class Schema:
    """Role to column-name mapping for feature CSV files."""

    subject: str = "subject_id"
    label: str = "label"
    target: str = "target"
    features: tuple[str, ...] | None = None  # None -> every remaining column
    labels: tuple[str, ...] = ()
    task: str = "classification"

    @classmethod
    def from_mapping(cls, mapping: Mapping[str, str]) -> "Schema":
        known = {"subject", "label", "target", "features", "labels", "task"}
        unknown = set(mapping) - known
        if unknown:
            raise SchemaError(f"unknown schema role(s): {sorted(unknown)}")
        kw: dict[str, Any] = {k: v.strip() for k, v in mapping.items() if k in {"subject", "label", "target", "task"}}
        feats = mapping.get("features", "*").strip()
        kw["features"] = None if feats in ("", "*") else tuple(_split_list(feats))
        if mapping.get("labels"):
            kw["labels"] = tuple(_split_list(mapping["labels"]))
        schema = cls(**kw)
        if schema.task not in TASK_KINDS:
            raise SchemaError(f"schema task must be one of {TASK_KINDS}, got {schema.task!r}")
        return schema

    def to_mapping(self) -> dict[str, str]:
        out = {
            "subject": self.subject,
            "label": self.label,
            "target": self.target,
            "features": "*" if self.features is None else ", ".join(self.features),
            "task": self.task,
        }
        if self.labels:
            out["labels"] = ", ".join(self.labels)
        return out


def _split_list(text: str) -> list[str]:
    return [t.strip() for t in text.split(",") if t.strip()]


def load_schema(path: str | os.PathLike) -> Schema:
    """Parse a flat ``role = column`` file (``#`` starts a comment)."""
    mapping: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line or line.startswith("["):
                continue
            if "=" not in line:
                raise SchemaError(f"{path}: line {lineno}: expected 'role = column'")
            key, value = line.split("=", 1)
            mapping[key.strip()] = value.strip().strip('"')
    return Schema.from_mapping(mapping)


def load_feature_table(path: str | os.PathLike, schema: Schema | Mapping[str, str]) -> FeatureTable:
    """Load a CSV feature file; rows keep file order, unmapped columns are dropped."""
    if not isinstance(schema, Schema):
        schema = Schema.from_mapping(schema)
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise EmptyInputError(f"{path}: empty file") from None
        pos = {name: i for i, name in enumerate(header)}
        for role in ("subject", "label", "target"):
            col = getattr(schema, role)
            if col not in pos:
                raise SchemaError(f"{path}: schema role {role!r} refers to absent column {col!r}")
        bound = {schema.subject, schema.label, schema.target}
        if schema.features is None:
            feature_names = [h for h in header if h not in bound]
        else:
            feature_names = list(schema.features)
            missing = [f for f in feature_names if f not in pos]
            if missing:
                raise SchemaError(f"{path}: schema references absent column(s) {missing}")
        fidx = [pos[f] for f in feature_names]
        si, li, ti = pos[schema.subject], pos[schema.label], pos[schema.target]

        subjects, labels, targets, rows = [], [], [], []
        for lineno, rec in enumerate(reader, start=2):
            if not rec or all(not c.strip() for c in rec):
                continue
            if len(rec) != len(header):
                raise ParseError(f"{path}: line {lineno}: expected {len(header)} fields, got {len(rec)}")
            subjects.append(rec[si].strip())
            labels.append(rec[li].strip())
            targets.append(_parse_cell(rec[ti], path, lineno, schema.target))
            rows.append([_parse_cell(rec[j], path, lineno, header[j]) for j in fidx])
    X = np.asarray(rows, dtype=float).reshape(len(rows), len(feature_names))
    return FeatureTable(
        subject_ids=np.asarray(subjects, dtype=object),
        labels=np.asarray(labels, dtype=object),
        targets=np.asarray(targets, dtype=float),
        X=X,
        feature_names=feature_names,
        label_set=schema.labels,
        task_kind=schema.task,
    )


def _parse_cell(cell: str, path, lineno: int, column: str) -> float:
    try:
        v = float(cell)
    except ValueError:
        raise ParseError(f"{path}: line {lineno}, column {column!r}: not a number: {cell!r}") from None
    if not math.isfinite(v):
        raise ParseError(f"{path}: line {lineno}, column {column!r}: non-finite value {cell!r}")
    return v


def write_feature_table(table: FeatureTable, path: str | os.PathLike, schema_path: str | os.PathLike | None = None) -> None:
    """Write a table as CSV (columns subject_id, label, target, features...).

    When ``schema_path`` is given, a matching schema file is written too.
    """
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["subject_id", "label", "target", *table.feature_names])
    for i in range(len(table)):
        w.writerow(
            [table.subject_ids[i], table.labels[i], format_float(table.targets[i])]
            + [format_float(v) for v in table.X[i]]
        )
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(buf.getvalue())
    if schema_path is not None:
        schema = Schema(labels=tuple(table.label_set), task=table.task_kind)
        with open(schema_path, "w", encoding="utf-8") as fh:
            for k, v in schema.to_mapping().items():
                fh.write(f"{k} = {v}\n")


# ---------------------------------------------------------------------------
# model artifacts


@dataclass
class ModelArtifact:
    """A fitted ensemble plus the preprocessing needed to feed it."""

    ensemble: "TrainedEnsemble"
    transform_recipe: "TransformRecipe | None" = None
    input_features: list[str] | None = None
    format_version: int = MODEL_FORMAT_VERSION
    echo: dict = field(default_factory=dict)

    @property
    def hyperparams(self):
        return self.ensemble.hyperparams

    @property
    def feature_names(self) -> list[str]:
        return self.ensemble.feature_names

    def prepare(self, table: FeatureTable) -> FeatureTable:
        """Apply the stored transform recipe and column selection to ``table``."""
        from .transforms import apply_recipe

        if self.input_features is not None:
            table = table.select_columns(self.input_features)
        if self.transform_recipe is not None:
            table = apply_recipe(table, self.transform_recipe)
        return table.select_columns(self.feature_names)

    def to_dict(self) -> dict:
        return {
            "format_version": self.format_version,
            "ensemble": self.ensemble.to_dict(),
            "transform_recipe": None if self.transform_recipe is None else self.transform_recipe.to_dict(),
            "input_features": self.input_features,
            "echo": self.echo,
        }


def _open_text(path, mode):
    path = os.fspath(path)
    if path.endswith(".gz"):
        if "w" in mode:
            raw = open(path, "wb")
            return io.TextIOWrapper(gzip.GzipFile(filename="", fileobj=raw, mode="wb", mtime=0), encoding="utf-8"), raw
        return io.TextIOWrapper(gzip.open(path, "rb"), encoding="utf-8"), None
    return open(path, mode, encoding="utf-8"), None


def save_model(model: ModelArtifact, path: str | os.PathLike) -> None:
    """Persist a model as versioned JSON (gzip-compressed when ``path`` ends in .gz)."""
    text = dumps_canonical(model.to_dict(), indent=1)
    fh, raw = _open_text(path, "w")
    try:
        fh.write(text)
    finally:
        fh.close()
        if raw is not None:
            raw.close()


def load_model(path: str | os.PathLike) -> ModelArtifact:
    from .ensemble import TrainedEnsemble
    from .transforms import TransformRecipe

    fh, _ = _open_text(path, "r")
    with fh:
        data = json.load(fh)
    version = data.get("format_version")
    if version != MODEL_FORMAT_VERSION:
        raise IncompatibleFormatError(
            f"{path}: model format_version {version!r} is not supported (expected {MODEL_FORMAT_VERSION})"
        )
    recipe = data.get("transform_recipe")
    return ModelArtifact(
        ensemble=TrainedEnsemble.from_dict(data["ensemble"]),
        transform_recipe=None if recipe is None else TransformRecipe.from_dict(recipe),
        input_features=data.get("input_features"),
        format_version=version,
        echo=data.get("echo") or {},
    )


# ---------------------------------------------------------------------------
# reports


def write_report(report, path: str | os.PathLike, format: str = "json") -> None:
    """Write an evaluation report or calibration curve as CSV or JSON.

    Output is byte-for-byte deterministic for equal reports.
    """
    if format == "json":
        text = dumps_canonical(report.to_dict())
    elif format == "csv":
        header, rows = report.to_rows()
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([format_float(v) if isinstance(v, (float, np.floating)) else v for v in row])
        text = buf.getvalue()
    else:
        raise UsageError(f"unknown report format {format!r}; expected 'csv' or 'json'")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
