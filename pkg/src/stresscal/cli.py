"""Command-line front end: ``stresscal <command> [options]``.

Settings come from three layers, later ones winning: built-in defaults, an
optional ``--config`` file (INI/TOML-like ``key = value`` lines grouped in
sections), and command-line flags. Every command resolves and validates the
whole configuration before doing any work and writes a ``<command>_config.json``
echo next to its outputs.

Exit status is 0 on success, 2 for usage or configuration errors and 1 for
failures while running a stage.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import hashlib
import json
import logging
import os
import sys
import warnings
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from . import __version__
from .dataio import (
    FeatureTable,
    ModelArtifact,
    Schema,
    dumps_canonical,
    load_feature_table,
    load_schema,
    load_signal_recording,
    save_model,
    write_feature_table,
    write_report,
)
from .ensemble import EnsembleHyperparams, fit_forest
from .errors import ParameterError, SchemaError, StressCalError, UsageError
from .evaluation import (
    CalibrationConfig,
    CalibrationCurve,
    EvaluationReport,
    ProbeResult,
    calibration_sweep,
    kfold_person_specific,
    loso_generic,
    person_specific,
    subject_id_probe,
)
from .features import DEFAULT_BANDS, LabelInterval, SubjectSession, WindowSpec, extract_feature_table
from .signals import FilterSpec, IBISeries, detect_r_peaks
from .transforms import apply_transform_policy, rebalance, select_features

log = logging.getLogger("stresscal")

COMMANDS = ("extract", "train", "evaluate", "calibrate", "rank-features", "report")
# algorithm used by each command when none is configured
COMMAND_ALGORITHM = {"train": "random_forest", "evaluate": "random_forest", "calibrate": "extra_trees", "rank-features": "random_forest"}


def stage_seed(master: int, stage: str) -> int:
    """Stable per-stage seed derived from the master seed and the stage name."""
    digest = hashlib.sha256(f"{int(master)}:{stage}".encode()).digest()
    return int.from_bytes(digest[:8], "little") >> 1


# ---------------------------------------------------------------------------
# configuration


def _bool(text: str) -> bool:
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise UsageError(f"expected a boolean, got {text!r}")


def _opt_float(text: str) -> float | None:
    t = str(text).strip().lower()
    return None if t in ("off", "none", "") else float(t)


def _int_list(text) -> tuple[int, ...]:
    if isinstance(text, (list, tuple)):
        return tuple(int(v) for v in text)
    return tuple(int(v) for v in str(text).replace("[", "").replace("]", "").split(",") if v.strip())


def _band(text) -> tuple[float, float]:
    if isinstance(text, (list, tuple)):
        lo, hi = text
    else:
        lo, hi = (float(v) for v in str(text).replace("[", "").replace("]", "").split(","))
    if not 0 <= lo < hi:
        raise UsageError(f"band edges must satisfy 0 <= low < high, got {text!r}")
    return float(lo), float(hi)


def _max_features(text):
    t = str(text).strip()
    if t.lower() in ("auto", "none", ""):
        return None
    return float(t) if "." in t else int(t)


def _selection(text):
    if text is None or str(text).strip().lower() in ("", "none", "off"):
        return None
    key, _, value = str(text).partition("=")
    key = key.strip().lower()
    if key == "top_k":
        return ("top_k", int(value))
    if key in ("min_mdi", "min_importance"):
        return ("min_importance", float(value))
    raise UsageError(f"--select expects top_k=N or min_mdi=x, got {text!r}")


@dataclass
class RunConfig:
    """Fully resolved settings for one command invocation."""

    command: str = ""
    seed: int = 0
    out_dir: str = "stresscal-out"
    threads: int = 1
    # data
    features: str | None = None
    schema: str | None = None
    task: str | None = None
    manifest: str | None = None
    labels: str | None = None
    kind: str = "hrv"
    # signal conditioning
    cutoff_hz: float = 4.0
    filter_order: int = 4
    smooth_window_s: float = 1.0
    scr_threshold: float = 0.01
    # windows
    hrv_window_s: float = 300.0
    eda_window_s: float = 600.0
    eda_step: int = 1
    vlf: tuple[float, float] = DEFAULT_BANDS["VLF"]
    lf: tuple[float, float] = DEFAULT_BANDS["LF"]
    hf: tuple[float, float] = DEFAULT_BANDS["HF"]
    # feature engineering
    skew_threshold: float | None = 0.75
    scale: bool = True
    rebalance: bool = True
    select: tuple | None = None
    # model
    algorithm: str | None = None
    n_trees: int | None = None
    max_depth: int | None = None
    max_features: int | float | None = None
    bootstrap: bool | None = None
    # protocols
    protocol: str = "loso"
    k: int = 10
    subject: str | None = None
    q: int = 4
    sizes: tuple[int, ...] = (0, 1, 2, 5, 10, 20, 50, 100)
    calibration_fraction: float = 0.5
    # report command
    input: str | None = None
    format: str = "json"
    output: str | None = None
    model_out: str | None = None

    def stage_seed(self, stage: str) -> int:
        return stage_seed(self.seed, stage)

    def hyperparams(self, task: str) -> EnsembleHyperparams:
        algorithm = self.algorithm or COMMAND_ALGORITHM.get(self.command, "random_forest")
        overrides = {
            k: v
            for k, v in (
                ("n_trees", self.n_trees),
                ("max_depth", self.max_depth),
                ("max_features", self.max_features),
                ("bootstrap", self.bootstrap),
            )
            if v is not None
        }
        return EnsembleHyperparams.defaults(algorithm, task, seed=self.stage_seed("model"), **overrides)

    @property
    def bands(self) -> dict:
        return {"VLF": self.vlf, "LF": self.lf, "HF": self.hf}

    @property
    def filter_spec(self) -> FilterSpec:
        return FilterSpec(self.cutoff_hz, self.filter_order, self.smooth_window_s)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["stresscal_version"] = __version__
        return d


# (section, key) in the config file -> (RunConfig field, converter)
CONFIG_KEYS = {
    ("run", "seed"): ("seed", int),
    ("run", "out_dir"): ("out_dir", str),
    ("run", "threads"): ("threads", int),
    ("data", "features"): ("features", str),
    ("data", "schema"): ("schema", str),
    ("data", "task"): ("task", str),
    ("data", "manifest"): ("manifest", str),
    ("data", "labels"): ("labels", str),
    ("data", "kind"): ("kind", str),
    ("signal", "cutoff_hz"): ("cutoff_hz", float),
    ("signal", "filter_order"): ("filter_order", int),
    ("signal", "smooth_window_s"): ("smooth_window_s", float),
    ("signal", "scr_threshold"): ("scr_threshold", float),
    ("windows", "hrv_window_s"): ("hrv_window_s", float),
    ("windows", "eda_window_s"): ("eda_window_s", float),
    ("windows", "eda_step"): ("eda_step", int),
    ("windows", "vlf"): ("vlf", _band),
    ("windows", "lf"): ("lf", _band),
    ("windows", "hf"): ("hf", _band),
    ("transform", "skew_threshold"): ("skew_threshold", _opt_float),
    ("transform", "scale"): ("scale", _bool),
    ("transform", "rebalance"): ("rebalance", _bool),
    ("transform", "select"): ("select", _selection),
    ("model", "algorithm"): ("algorithm", str),
    ("model", "n_trees"): ("n_trees", int),
    ("model", "max_depth"): ("max_depth", int),
    ("model", "max_features"): ("max_features", _max_features),
    ("model", "bootstrap"): ("bootstrap", _bool),
    ("protocol", "protocol"): ("protocol", str),
    ("protocol", "k"): ("k", int),
    ("protocol", "subject"): ("subject", str),
    ("protocol", "q"): ("q", int),
    ("protocol", "sizes"): ("sizes", _int_list),
    ("protocol", "calibration_fraction"): ("calibration_fraction", float),
}


def read_config_file(path: str) -> dict:
    """Parse a sectioned ``key = value`` file into RunConfig field values.

    Paths in the ``[data]`` section are resolved relative to the file.
    """
    if not os.path.isfile(path):
        raise UsageError(f"config file not found: {path}")
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"), interpolation=None)
    try:
        parser.read(path, encoding="utf-8")
    except configparser.Error as exc:
        raise UsageError(f"{path}: {exc}") from None
    base = Path(path).resolve().parent
    out = {}
    for section in parser.sections():
        for key, raw in parser.items(section):
            spec = CONFIG_KEYS.get((section.lower(), key.lower()))
            if spec is None:
                raise UsageError(f"{path}: unknown setting [{section}] {key}")
            name, conv = spec
            value = raw.strip().strip('"').strip("'")
            try:
                out[name] = conv(value)
            except (TypeError, ValueError) as exc:
                raise UsageError(f"{path}: [{section}] {key}: {exc}") from None
            if section.lower() == "data" and key in ("features", "schema", "manifest", "labels"):
                out[name] = str((base / value)) if not os.path.isabs(value) else value
    return out


def _check_file(path: str | None, what: str) -> None:
    if path is None:
        raise UsageError(f"no {what} given")
    if not os.path.isfile(path):
        raise UsageError(f"{what} not found: {path}")


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """Defaults, then the config file, then flags; validated before any stage runs."""
    values = {}
    if getattr(args, "config", None):
        values.update(read_config_file(args.config))
    names = {f.name for f in fields(RunConfig)}
    for name, value in vars(args).items():
        if name in names and value is not None:
            values[name] = value
    values["command"] = args.command
    cfg = RunConfig(**values)
    _validate(cfg)
    return cfg


def _validate(cfg: RunConfig) -> None:
    if cfg.threads < 1:
        raise UsageError("--threads must be at least 1")
    if cfg.seed < 0:
        raise UsageError("--seed must be nonnegative")
    if cfg.task is not None and cfg.task not in ("classification", "regression"):
        raise UsageError(f"task must be 'classification' or 'regression', got {cfg.task!r}")
    try:
        cfg.filter_spec
        WindowSpec(cfg.hrv_window_s)
        WindowSpec(cfg.eda_window_s, cfg.eda_step)
    except ParameterError as exc:
        raise UsageError(str(exc)) from None
    if cfg.scr_threshold <= 0:
        raise UsageError("--scr-threshold must be positive")
    if cfg.command == "extract":
        if cfg.kind not in ("hrv", "eda"):
            raise UsageError(f"--kind must be 'hrv' or 'eda', got {cfg.kind!r}")
        _check_file(cfg.manifest, "manifest")
        _check_file(cfg.labels, "labels file")
    elif cfg.command in ("train", "evaluate", "calibrate", "rank-features"):
        _check_file(cfg.features, "feature table")
        if cfg.schema is not None:
            _check_file(cfg.schema, "schema file")
        cfg.hyperparams(cfg.task or "classification")
        if cfg.command == "evaluate" and cfg.protocol not in ("kfold", "loso"):
            raise UsageError(f"--protocol must be 'kfold' or 'loso', got {cfg.protocol!r}")
        if cfg.command == "evaluate" and cfg.k < 2:
            raise UsageError("--k must be at least 2")
        if cfg.command == "calibrate":
            CalibrationConfig(cfg.q, cfg.sizes, cfg.calibration_fraction, 0)
    elif cfg.command == "report":
        _check_file(cfg.input, "report file")
        if cfg.format not in ("json", "csv", "text"):
            raise UsageError("--format must be json, csv or text")


# ---------------------------------------------------------------------------
# helpers


def _out(cfg: RunConfig, name: str) -> Path:
    path = Path(cfg.out_dir)
    path.mkdir(parents=True, exist_ok=True)
    return path / name


def _write_text(path: Path, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def _write_echo(cfg: RunConfig) -> None:
    _write_text(_out(cfg, f"{cfg.command.replace('-', '_')}_config.json"), dumps_canonical(cfg.to_dict()))


def _load_table(cfg: RunConfig) -> FeatureTable:
    schema = load_schema(cfg.schema) if cfg.schema else Schema()
    table = load_feature_table(cfg.features, schema)
    if cfg.task is not None:
        table = table.with_task(cfg.task)
    if cfg.rebalance and table.task_kind == "classification":
        n = len(table)
        table = rebalance(table, cfg.stage_seed("rebalance"))
        log.info("rebalanced classes: %d -> %d rows", n, len(table))
    return table


def _read_csv(path: str, required: tuple[str, ...]) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in required if c not in (reader.fieldnames or [])]
        if missing:
            raise SchemaError(f"{path}: missing column(s) {missing}")
        return list(reader)


def _read_sessions(cfg: RunConfig) -> list[SubjectSession]:
    base = Path(cfg.manifest).resolve().parent
    intervals: dict[str, list[LabelInterval]] = {}
    for row in _read_csv(cfg.labels, ("subject_id", "start_s", "end_s", "label", "target")):
        intervals.setdefault(row["subject_id"], []).append(
            LabelInterval(float(row["start_s"]), float(row["end_s"]), row["label"], float(row["target"]))
        )
    sessions: dict[str, SubjectSession] = {}
    for row in _read_csv(cfg.manifest, ("subject_id", "kind", "path")):
        sid, kind = row["subject_id"], row["kind"].strip().lower()
        path = row["path"] if os.path.isabs(row["path"]) else str(base / row["path"])
        if not os.path.isfile(path):
            raise UsageError(f"signal file not found: {path}")
        s = sessions.setdefault(sid, SubjectSession(sid, intervals.get(sid, [])))
        if kind == "ibi":
            iv = load_signal_recording(path, "ECG", 1.0).samples
            s.ibi = IBISeries(iv)
        elif kind in ("ecg", "eda"):
            fs = float(row.get("sample_rate_hz") or 0)
            if fs <= 0:
                raise UsageError(f"manifest: {sid} {kind} needs a positive sample_rate_hz")
            rec = load_signal_recording(path, kind, fs)
            if kind == "ecg":
                s.ecg = rec
            else:
                s.eda = rec
        else:
            raise UsageError(f"manifest: unknown signal kind {row['kind']!r} (expected ibi, ecg or eda)")
    for sid, s in sessions.items():
        if not s.labels:
            warnings.warn(f"subject {sid} has no labelled intervals", RuntimeWarning)
        if cfg.kind == "hrv" and s.ibi is None and s.ecg is not None:
            s.ibi = detect_r_peaks(s.ecg)
    return list(sessions.values())


# ---------------------------------------------------------------------------
# commands


def cmd_extract(cfg: RunConfig) -> int:
    sessions = _read_sessions(cfg)
    if cfg.kind == "hrv":
        window = WindowSpec(cfg.hrv_window_s)
        missing = [s.subject_id for s in sessions if s.ibi is None]
    else:
        window = WindowSpec(cfg.eda_window_s, cfg.eda_step)
        missing = [s.subject_id for s in sessions if s.eda is None]
    if missing:
        raise UsageError(f"no {cfg.kind.upper()} input for subject(s) {sorted(missing)}")
    table, xlog = extract_feature_table(
        sessions,
        cfg.kind,
        window,
        bands=cfg.bands,
        filter_spec=cfg.filter_spec,
        scr_threshold=cfg.scr_threshold,
        n_jobs=cfg.threads,
    )
    out = _out(cfg, f"features_{cfg.kind}.csv")
    write_feature_table(table, out, schema_path=_out(cfg, f"features_{cfg.kind}.schema"))
    _write_text(_out(cfg, "extraction_log.json"), dumps_canonical(xlog.to_dict()))
    print(f"extract: {xlog.rows} rows from {xlog.windows} windows "
          f"({xlog.dropped_straddling} straddling, {xlog.dropped_unlabeled} unlabelled dropped) -> {out}")
    return 0


def cmd_train(cfg: RunConfig) -> int:
    table = _load_table(cfg)
    input_features = list(table.feature_names)
    recipe = None
    if cfg.skew_threshold is not None:
        table, recipe = apply_transform_policy(table, cfg.skew_threshold, cfg.scale)
    hyper = cfg.hyperparams(table.task_kind)
    model = fit_forest(table, hyper, cfg.threads)
    if cfg.select is not None:
        how, value = cfg.select
        keep = select_features(model.importances, model.feature_names, **{how: value})
        log.info("selected %d of %d features", len(keep), table.n_features)
        model = fit_forest(table.select_columns(keep), hyper, cfg.threads)
    artifact = ModelArtifact(model, recipe, input_features, echo=cfg.to_dict())
    path = Path(cfg.model_out) if cfg.model_out else _out(cfg, "model.json.gz")
    save_model(artifact, path)
    order = np.argsort(-model.importances, kind="stable")
    lines = ["feature,importance"] + [f"{model.feature_names[i]},{model.importances[i]!r}" for i in order]
    _write_text(_out(cfg, "importances.csv"), "\n".join(lines) + "\n")
    print(f"train: {hyper.algorithm} ({hyper.n_trees} trees, depth {hyper.max_depth}) on {len(table)} rows, "
          f"{len(model.feature_names)} features -> {path}")
    return 0


def cmd_evaluate(cfg: RunConfig) -> int:
    table = _load_table(cfg)
    hyper = cfg.hyperparams(table.task_kind)
    seed = cfg.stage_seed("protocol")
    if cfg.protocol == "loso":
        report = loso_generic(table, hyper, seed, cfg.skew_threshold, cfg.threads)
    elif cfg.subject is not None:
        report = kfold_person_specific(table, cfg.subject, cfg.k, hyper, seed, cfg.skew_threshold, cfg.threads)
    else:
        report = person_specific(table, cfg.k, hyper, seed, cfg.skew_threshold, cfg.threads)
    write_report(report, _out(cfg, f"evaluation_{cfg.protocol}.json"), "json")
    write_report(report, _out(cfg, f"evaluation_{cfg.protocol}.csv"), "csv")
    print(report.summary())
    return 0


def cmd_calibrate(cfg: RunConfig) -> int:
    table = _load_table(cfg)
    hyper = cfg.hyperparams(table.task_kind)
    config = CalibrationConfig(cfg.q, cfg.sizes, cfg.calibration_fraction, cfg.stage_seed("protocol"))
    curve = calibration_sweep(table, config, hyper, cfg.threads)
    write_report(curve, _out(cfg, "calibration.json"), "json")
    write_report(curve, _out(cfg, "calibration.csv"), "csv")
    print(curve.summary())
    return 0


def cmd_rank_features(cfg: RunConfig) -> int:
    table = _load_table(cfg)
    result = subject_id_probe(table, cfg.hyperparams(table.task_kind), cfg.threads)
    write_report(result, _out(cfg, "feature_ranking.json"), "json")
    write_report(result, _out(cfg, "feature_ranking.csv"), "csv")
    for i, (name, imp) in enumerate(result.ranking[:10]):
        print(f"{i + 1:3d}  {name:<20s} {imp:.6f}")
    print(f"subject_id rank: {result.subject_rank} of {len(result.ranking)}")
    return 0


def _load_report(path: str):
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    kind = data.get("kind") if isinstance(data, dict) else None
    if kind == "evaluation_report":
        return EvaluationReport.from_dict(data)
    if kind == "calibration_curve":
        return CalibrationCurve.from_dict(data)
    if kind == "subject_id_probe":
        return ProbeResult.from_dict(data)
    raise UsageError(f"{path}: not a report written by evaluate, calibrate or rank-features")


def cmd_report(cfg: RunConfig) -> int:
    report = _load_report(cfg.input)
    if cfg.format == "text" or cfg.output is None:
        print(report.summary())
    if cfg.output is not None and cfg.format != "text":
        write_report(report, cfg.output, cfg.format)
    return 0


HANDLERS = {
    "extract": cmd_extract,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "calibrate": cmd_calibrate,
    "rank-features": cmd_rank_features,
    "report": cmd_report,
}


# ---------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("global options")
    g.add_argument("--config", help="settings file (sections [run] [data] [signal] [windows] [transform] [model] [protocol])")
    g.add_argument("--seed", type=int, help="master seed; stage seeds derive from it (default 0)")
    g.add_argument("--out-dir", dest="out_dir", help="output directory (default stresscal-out)")
    g.add_argument("--threads", type=int, help="worker threads (default 1)")
    g.add_argument("-v", "--verbose", action="count", default=0, help="more logging")

    data = argparse.ArgumentParser(add_help=False)
    d = data.add_argument_group("feature table")
    d.add_argument("--features", help="feature CSV")
    d.add_argument("--schema", help="schema file mapping roles to column names")
    d.add_argument("--task", choices=("classification", "regression"))
    d.add_argument("--skew-threshold", dest="skew_threshold", type=_opt_float,
                   help="|skew| above which a column is transformed; 'off' disables transforms (default 0.75)")
    d.add_argument("--no-rebalance", dest="rebalance", action="store_const", const=False,
                   help="keep the class imbalance instead of undersampling")

    model = argparse.ArgumentParser(add_help=False)
    m = model.add_argument_group("model")
    m.add_argument("--algorithm", help="rf | extratrees")
    m.add_argument("--n-trees", dest="n_trees", type=int)
    m.add_argument("--max-depth", dest="max_depth", type=int)
    m.add_argument("--max-features", dest="max_features", type=_max_features)

    parser = argparse.ArgumentParser(prog="stresscal", description="Stress prediction from HRV/EDA features.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    p = sub.add_parser("extract", parents=[common], help="compute windowed HRV or EDA features from signals")
    p.add_argument("--manifest", help="CSV: subject_id, kind (ibi|ecg|eda), path, sample_rate_hz")
    p.add_argument("--labels", help="CSV: subject_id, start_s, end_s, label, target")
    p.add_argument("--kind", choices=("hrv", "eda"))
    p.add_argument("--cutoff-hz", dest="cutoff_hz", type=float)
    p.add_argument("--filter-order", dest="filter_order", type=int)
    p.add_argument("--smooth-window-s", dest="smooth_window_s", type=float)
    p.add_argument("--scr-threshold", dest="scr_threshold", type=float)
    p.add_argument("--hrv-window-s", dest="hrv_window_s", type=float)
    p.add_argument("--eda-window-s", dest="eda_window_s", type=float)
    p.add_argument("--eda-step", dest="eda_step", type=int)

    p = sub.add_parser("train", parents=[common, data, model], help="fit a forest and save the model")
    p.add_argument("--select", type=_selection, help="keep features by importance: top_k=N or min_mdi=x")
    p.add_argument("--model-out", dest="model_out", help="model path (default <out-dir>/model.json.gz)")

    p = sub.add_parser("evaluate", parents=[common, data, model], help="person-specific k-fold or LOSO evaluation")
    p.add_argument("--protocol", choices=("kfold", "loso"))
    p.add_argument("--k", type=int, help="folds per subject for kfold (default 10)")
    p.add_argument("--subject", help="run kfold for this subject only")

    p = sub.add_parser("calibrate", parents=[common, data, model], help="calibration-size sweep")
    p.add_argument("--q", type=int, help="held-out subjects (default 4)")
    p.add_argument("--sizes", type=_int_list, help="comma-separated calibration sizes per subject")
    p.add_argument("--calibration-fraction", dest="calibration_fraction", type=float)

    sub.add_parser("rank-features", parents=[common, data, model], help="subject-id importance probe")

    p = sub.add_parser("report", parents=[common], help="summarize or convert a saved report")
    p.add_argument("input", help="report JSON written by evaluate or calibrate")
    p.add_argument("--format", choices=("json", "csv", "text"))
    p.add_argument("--output", help="write the converted report here")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s"
    )
    stage = args.command
    try:
        cfg = resolve_config(args)
    except (UsageError, SchemaError, ValueError) as exc:
        print(f"stresscal {stage}: configuration error: {exc}", file=sys.stderr)
        return 2
    try:
        if stage != "report":
            _write_echo(cfg)
        return HANDLERS[stage](cfg)
    except UsageError as exc:
        print(f"stresscal {stage}: error: {exc}", file=sys.stderr)
        return 2
    except (StressCalError, OSError, ValueError) as exc:
        print(f"stresscal {stage}: failed: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
