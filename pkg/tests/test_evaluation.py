import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from stresscal.dataio import FeatureTable, dumps_canonical
from stresscal.ensemble import EnsembleHyperparams, fit_forest, predict_codes
from stresscal.errors import ContaminationError, ProtocolError, ShapeError, UsageError
from stresscal.evaluation import (
    CalibrationConfig,
    EvaluationReport,
    calibrate_model,
    calibration_sweep,
    classification_metrics,
    kfold_indices,
    kfold_person_specific,
    loso_generic,
    person_specific,
    regression_metrics,
    subject_id_probe,
)
from stresscal.synthetic import make_subject_only_table, make_subject_shift_table

from conftest import make_table

RF = lambda n=50, **kw: EnsembleHyperparams.defaults("rf", "classification", n_trees=n, **kw)  # noqa: E731
ET = lambda n=50, **kw: EnsembleHyperparams.defaults("et", "classification", n_trees=n, **kw)  # noqa: E731


@pytest.fixture(scope="module")
def shift():
    return make_subject_shift_table(n_subjects=6, rows_per_subject=120, seed=11)


# --- metrics -------------------------------------------------------------------


def test_perfect_classification():
    m = classification_metrics(["a", "b", "a"], ["a", "b", "a"], ["a", "b"])
    assert all(m[k] == 1.0 for k in ("accuracy", "precision", "recall", "f1"))


def test_hand_confusion_matrix():
    m = classification_metrics([0, 0, 1, 1], [0, 1, 1, 1], [0, 1])
    assert m.accuracy == 0.75
    assert m.precision == pytest.approx((1 + 2 / 3) / 2)
    assert m.recall == pytest.approx(0.75)
    assert m.f1 == pytest.approx(2 * m.precision * m.recall / (m.precision + m.recall))


def test_absent_class_contributes_zero():
    m = classification_metrics(["a", "a"], ["a", "a"], ["a", "b"])
    assert m.accuracy == 1.0 and m.precision == 0.5 and m.recall == 0.5


def test_f1_zero_when_nothing_right():
    m = classification_metrics(["a", "b"], ["b", "a"], ["a", "b"])
    assert m.precision == m.recall == m.f1 == 0.0


def test_metric_length_mismatch():
    with pytest.raises(ShapeError):
        classification_metrics([1, 2], [1], [1, 2])
    with pytest.raises(ShapeError):
        regression_metrics([1.0], [])


def test_regression_examples():
    m = regression_metrics([1, 2, 3], [2, 2, 5])
    assert m.mae == 1.0 and m.rmse == pytest.approx(math.sqrt(5 / 3))
    z = regression_metrics([1, 2], [1, 2])
    assert z.mae == z.rmse == 0
    c = regression_metrics([1.0, 5.0, -2.0], [3.5, 7.5, 0.5])
    assert c.mae == pytest.approx(2.5) and c.rmse == pytest.approx(2.5)


@given(st.lists(st.tuples(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3)), min_size=1, max_size=50))
def test_rmse_at_least_mae(pairs):
    y, yhat = zip(*pairs)
    m = regression_metrics(y, yhat)
    assert m.rmse >= m.mae >= 0


@given(st.lists(st.tuples(st.sampled_from("abc"), st.sampled_from("abc")), min_size=1, max_size=40))
def test_classification_metrics_in_unit_interval(pairs):
    y, yhat = zip(*pairs)
    m = classification_metrics(y, yhat, ["a", "b", "c"])
    for k in ("accuracy", "precision", "recall", "f1"):
        assert 0.0 <= m[k] <= 1.0


# --- k-fold ----------------------------------------------------------------------


@given(st.integers(2, 300), st.integers(2, 12), st.integers(0, 2**32 - 1))
def test_kfold_is_partition(n, k, seed):
    if n < k:
        with pytest.raises(ProtocolError):
            kfold_indices(n, k, seed)
        return
    folds = kfold_indices(n, k, seed)
    allidx = np.concatenate(folds)
    assert len(folds) == k
    assert np.array_equal(np.sort(allidx), np.arange(n))
    sizes = {f.size for f in folds}
    assert max(sizes) - min(sizes) <= 1


def test_kfold_105_rows():
    assert sorted({f.size for f in kfold_indices(105, 10, 0)}) == [10, 11]


def test_kfold_uses_one_subject_only(shift):
    rep = kfold_person_specific(shift, "S03", k=10, hyper=RF(30), seed=1)
    assert len(rep.units) == 10
    assert sum(u.n_test for u in rep.units) == 120
    assert all(u.n_train + u.n_test == 120 for u in rep.units)
    assert rep.extra["subject"] == "S03"


def test_kfold_separable_subject_is_accurate():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(150, 4))
    labels = np.select([X[:, 2] < -0.5, X[:, 2] > 0.5], ["low", "high"], "mid")
    t = make_table(X, labels, subjects=["S1"] * 150)
    rep = kfold_person_specific(t, "S1", k=10, hyper=RF(200), seed=0)
    assert rep.mean("accuracy") > 0.95


def test_kfold_too_few_rows(shift):
    small = shift.take(np.flatnonzero(shift.subject_ids == "S01")[:5])
    with pytest.raises(ProtocolError):
        kfold_person_specific(small, "S01", k=10)


def test_report_aggregate_within_unit_range(shift):
    rep = person_specific(shift, k=5, hyper=RF(20))
    for name, agg in rep.aggregate.items():
        vals = [u.metrics[name] for u in rep.units]
        assert min(vals) <= agg["mean"] <= max(vals)


# --- LOSO ------------------------------------------------------------------------


def test_loso_structure():
    t = make_subject_shift_table(n_subjects=3, rows_per_subject=30, seed=2)
    rep = loso_generic(t, RF(10))
    assert [u.unit for u in rep.units] == ["S01", "S02", "S03"]
    assert all(u.n_test == 30 and u.n_train == 60 for u in rep.units)


def test_loso_single_subject():
    t = make_subject_shift_table(n_subjects=1, rows_per_subject=30)
    with pytest.raises(ProtocolError):
        loso_generic(t)


def test_loso_far_below_person_specific(shift):
    ps = person_specific(shift, k=10, hyper=RF(100))
    lo = loso_generic(shift, RF(100))
    assert lo.mean("accuracy") <= ps.mean("accuracy") - 0.20


def test_report_reproducible_bytes(shift):
    a = loso_generic(shift, RF(20, seed=5))
    b = loso_generic(shift, RF(20, seed=5))
    assert dumps_canonical(a.to_dict()) == dumps_canonical(b.to_dict())
    assert EvaluationReport.from_dict(json.loads(dumps_canonical(a.to_dict()))).to_dict() == a.to_dict()


def test_loso_with_transform_policy(shift):
    rep = loso_generic(shift, RF(10), skew_threshold=0.75)
    assert len(rep.units) == 6


def test_hyperparams_task_mismatch(shift):
    with pytest.raises(UsageError):
        loso_generic(shift, EnsembleHyperparams.defaults("rf", "regression"))


# --- calibration -----------------------------------------------------------------


def test_empty_calibration_equals_generic_fit(shift):
    generic = shift.take(~np.isin(shift.subject_ids, ["S01"]))
    empty = shift.take(np.zeros(0, dtype=int))
    model = calibrate_model(generic, empty, ET(20), seed=3)
    perm = np.random.default_rng(3).permutation(len(generic))
    ref = fit_forest(generic.take(perm), ET(20))
    assert predict_codes(model, shift.X).tobytes() == predict_codes(ref, shift.X).tobytes()


def test_contamination_detected(shift):
    with pytest.raises(ContaminationError):
        calibrate_model(shift, shift.for_subject("S02"), ET(5))


def test_calibration_config_validation():
    with pytest.raises(UsageError):
        CalibrationConfig(sizes=(5, 1))
    with pytest.raises(UsageError):
        CalibrationConfig(sizes=(-1, 2))


def test_q_must_be_below_subject_count(shift):
    with pytest.raises(ProtocolError):
        calibration_sweep(shift, CalibrationConfig(q=6, sizes=(0,)), ET(5))


def test_generic_pool_size_follows_q():
    t = make_subject_shift_table(n_subjects=25, rows_per_subject=8, seed=1)
    curve = calibration_sweep(t, CalibrationConfig(q=4, sizes=(0,), seed=9), ET(5))
    assert len(curve.splits["generic_subjects"]) == 21
    assert len(curve.held_out) == 4


@pytest.fixture(scope="module")
def sweep(shift):
    cfg = CalibrationConfig(q=2, sizes=(0, 5, 20, 60), seed=4)
    return calibration_sweep(shift, cfg, ET(60), keep_predictions=True)


def test_sweep_one_entry_per_size(sweep):
    assert sweep.sizes == [0, 5, 20, 60]
    assert all(set(p.per_subject) == set(sweep.held_out) for p in sweep.points)


def test_sweep_partitions_audited(sweep, shift):
    pools, tests = sweep.splits["pool"], sweep.splits["test"]
    for s in sweep.held_out:
        rows = np.flatnonzero(shift.subject_ids == s)
        assert np.intersect1d(pools[s], tests[s]).size == 0
        assert np.array_equal(np.sort(np.concatenate([pools[s], tests[s]])), rows)
        for size, cal in sweep.splits["calibration"].items():
            assert np.intersect1d(cal[s], tests[s]).size == 0
            assert cal[s].size == min(size, pools[s].size)
    # calibration draws are nested: larger sizes extend smaller ones
    cal = sweep.splits["calibration"]
    for s in sweep.held_out:
        assert np.array_equal(cal[60][s][:20], cal[20][s])


def test_sweep_zero_equals_baseline(sweep):
    for s in sweep.held_out:
        assert sweep.predictions[0][s].tobytes() == sweep.predictions["baseline"][s].tobytes()
    assert sweep.point(0).to_dict() == sweep.baseline.to_dict()


def test_sweep_improves_with_calibration(sweep):
    assert sweep.point(60).mean("accuracy") > sweep.point(0).mean("accuracy") + 0.15


def test_sweep_clips_oversized_requests(shift):
    with pytest.warns(RuntimeWarning, match="clipped"):
        curve = calibration_sweep(shift, CalibrationConfig(q=1, sizes=(0, 500), seed=1), ET(5))
    assert curve.point(500).n_calibration[curve.held_out[0]] == 60


def test_sweep_regression_reports_mae():
    t = make_subject_shift_table(n_subjects=5, rows_per_subject=80, seed=3, task="regression")
    curve = calibration_sweep(t, CalibrationConfig(q=1, sizes=(0, 10), seed=0), EnsembleHyperparams.defaults("et", "regression", n_trees=40))
    assert set(curve.point(0).aggregate) == {"mae", "rmse"}


# --- probe --------------------------------------------------------------------------


def test_probe_subject_determines_label():
    res = subject_id_probe(make_subject_only_table(seed=1), RF(200))
    assert res.subject_rank == 1
    assert res.ranking[0][0] == "subject_id"
    assert sum(v for _, v in res.ranking) == pytest.approx(1.0)


def test_probe_label_independent_of_subject():
    rng = np.random.default_rng(0)
    n = 300
    X = rng.normal(size=(n, 3))
    labels = np.where(X[:, 0] > 0, "hi", "lo")
    subjects = np.repeat(["A", "B", "C", "D", "E", "F"], n // 6)
    res = subject_id_probe(make_table(X, labels, subjects=subjects), RF(200))
    assert res.subject_rank != 1


def test_probe_needs_two_subjects():
    t = make_table(np.zeros((4, 1)) + np.arange(4)[:, None], ["a", "b", "a", "b"])
    with pytest.raises(ProtocolError):
        subject_id_probe(t)
