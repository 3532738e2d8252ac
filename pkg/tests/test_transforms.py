import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st
from scipy import stats

from stresscal.errors import PolicyError
from stresscal.transforms import (
    apply_recipe,
    apply_transform_policy,
    choose_transform,
    fit_robust_scaler,
    fit_yeo_johnson,
    rebalance,
    robust_scale,
    select_features,
    skewness,
    yeo_johnson,
    yeo_johnson_loglik,
)

from conftest import make_table

finite = st.floats(-1e3, 1e3, allow_nan=False)


def test_skewness_examples():
    assert skewness([-1, 0, 1]) == pytest.approx(0.0, abs=1e-15)
    assert skewness([0, 0, 0, 10]) > 0
    assert skewness([4.0] * 5) == 0


@given(st.lists(finite, min_size=3, max_size=50))
def test_skewness_matches_scipy(x):
    if np.ptp(x) < 1e-6:
        return
    assert skewness(x) == pytest.approx(stats.skew(x, bias=True), rel=1e-7, abs=1e-7)


@pytest.mark.parametrize(
    "y,lmbda,expected",
    [(5.0, 1.0, 5.0), (-5.0, 1.0, -5.0), (0.0, 0.0, 0.0), (-3.0, 2.0, -math.log(4)), (3.0, 0.5, 2.0)],
)
def test_yeo_johnson_examples(y, lmbda, expected):
    assert yeo_johnson(y, lmbda) == pytest.approx(expected, abs=1e-12)


@given(st.lists(finite, min_size=1, max_size=30), st.floats(-4, 4))
def test_yeo_johnson_matches_scipy(y, lmbda):
    np.testing.assert_allclose(yeo_johnson(np.array(y), lmbda), stats.yeojohnson(np.array(y), lmbda), rtol=1e-9, atol=1e-9)


@given(st.floats(0, 1e3), st.booleans())
def test_yeo_johnson_continuous_at_special_lambdas(magnitude, negative):
    # lambda = 0 is special on the y >= 0 branch, lambda = 2 on the y < 0 branch
    y, lmbda = (-magnitude - 1e-3, 2.0) if negative else (magnitude, 0.0)
    for eps in (1e-8, -1e-8):
        assert abs(yeo_johnson(y, lmbda + eps) - yeo_johnson(y, lmbda)) < 1e-6


@given(finite, finite, st.floats(-5, 5))
def test_yeo_johnson_monotone(a, b, lmbda):
    if a < b:
        assert yeo_johnson(a, lmbda) <= yeo_johnson(b, lmbda)


def test_loglik_matches_scipy():
    x = np.random.default_rng(0).gamma(2.0, 2.0, 200) - 1.0
    for lmbda in (-1.0, 0.0, 0.7, 2.0, 3.1):
        assert yeo_johnson_loglik(x, lmbda) == pytest.approx(stats.yeojohnson_llf(lmbda, x), rel=1e-9)


def test_fit_lambda_normal_and_lognormal():
    rng = np.random.default_rng(1)
    assert fit_yeo_johnson(rng.normal(5.0, 1.0, 5000)) == pytest.approx(1.0, abs=0.3)
    # log(1 + x) is close to log(x) when x is large, so lambda lands near 0
    assert abs(fit_yeo_johnson(np.exp(rng.normal(3.0, 1.0, 5000)))) < 0.2


@pytest.mark.parametrize("seed", range(5))
def test_fit_lambda_agrees_with_scipy(seed):
    x = np.random.default_rng(seed).lognormal(0.0, 0.8, 400) - 0.5
    ours = fit_yeo_johnson(x)
    ref = stats.yeojohnson_normmax(x)
    assert yeo_johnson_loglik(x, ours) >= yeo_johnson_loglik(x, ref) - 1e-6
    assert ours == pytest.approx(ref, abs=1e-3)


def test_fit_lambda_constant_warns():
    with pytest.warns(RuntimeWarning):
        assert fit_yeo_johnson(np.full(10, 3.0)) == 1.0


# --- robust scaling ---------------------------------------------------------


def test_robust_scale_examples():
    med, q1, q3 = fit_robust_scaler([1, 2, 3, 4, 5])
    assert (med, q1, q3) == (3, 2, 4)
    assert robust_scale(5, med, q1, q3) == 1.0
    assert robust_scale(med, med, q1, q3) == 0.0
    assert robust_scale(q3, med, q1, q3) == pytest.approx((q3 - med) / (q3 - q1))


def test_robust_scale_degenerate_iqr():
    med, q1, q3 = fit_robust_scaler([0, 0, 0, 0, 9])
    assert robust_scale(9.0, med, q1, q3) == 9.0


@given(st.lists(finite, min_size=3, max_size=40), st.floats(-100, 100))
def test_robust_scale_translation_equivariant(x, c):
    x = np.array(x)
    _, q1, q3 = fit_robust_scaler(x)
    assume(q3 - q1 == 0 or q3 - q1 > 1e-6)  # smaller spreads are absorbed by the shift
    a = robust_scale(x, *fit_robust_scaler(x))
    b = robust_scale(x + c, *fit_robust_scaler(x + c))
    np.testing.assert_allclose(a, b, atol=1e-6 * (1 + np.abs(x).max()))
    assert robust_scale(np.median(x), *fit_robust_scaler(x)) == pytest.approx(0.0, abs=1e-9)


# --- policy -----------------------------------------------------------------


def test_policy_choices():
    rng = np.random.default_rng(2)
    assert choose_transform(rng.normal(size=500))[0] == "none"
    assert choose_transform(rng.lognormal(size=500))[0] == "log"
    assert choose_transform(np.concatenate([[0.0], rng.lognormal(size=500)]))[0] == "sqrt"
    kind, lam = choose_transform(rng.lognormal(size=500) - 1.0)
    assert kind == "yeo-johnson" and lam is not None


def test_policy_reduces_skew_and_records_recipe():
    rng = np.random.default_rng(3)
    X = np.column_stack([rng.normal(size=300), rng.lognormal(sigma=1.5, size=300), rng.exponential(size=300) - 0.5])
    t = make_table(X, ["a"] * 300)
    out, recipe = apply_transform_policy(t)
    assert [c.transform for c in recipe.columns] == ["none", "log", "yeo-johnson"]
    for j in (1, 2):
        assert abs(skewness(out.X[:, j])) < abs(skewness(X[:, j]))
    for c in recipe.columns:
        assert c.q1 <= c.median <= c.q3
    np.testing.assert_allclose(np.median(out.X, axis=0), 0.0, atol=1e-12)


@given(
    st.lists(st.lists(st.floats(-1e6, 1e6), min_size=3, max_size=3), min_size=5, max_size=40)
)
def test_policy_never_produces_non_finite(rows):
    out, _ = apply_transform_policy(make_table(rows, ["a"] * len(rows)))
    assert np.isfinite(out.X).all()


def test_recipe_uses_training_statistics_only():
    rng = np.random.default_rng(4)
    train = make_table(rng.lognormal(size=(200, 2)), ["a"] * 200)
    test = make_table(100 + rng.lognormal(size=(50, 2)), ["a"] * 50)
    _, recipe = apply_transform_policy(train)
    shifted = apply_recipe(test, recipe)
    # test medians are far from the fitted ones, so they must not map to 0
    assert (np.abs(np.median(shifted.X, axis=0)) > 1).all()
    again = apply_recipe(test, recipe)
    assert shifted.X.tobytes() == again.X.tobytes()


def test_recipe_serialization_roundtrip():
    rng = np.random.default_rng(5)
    t = make_table(rng.lognormal(size=(100, 3)) - 0.5, ["a"] * 100)
    _, recipe = apply_transform_policy(t)
    assert type(recipe).from_dict(recipe.to_dict()) == recipe


# --- rebalance and selection -----------------------------------------------


def counts_table(counts):
    labels = [lab for lab, n in counts.items() for _ in range(n)]
    return make_table(np.arange(len(labels), dtype=float)[:, None], labels)


def test_rebalance_counts():
    out = rebalance(counts_table({"a": 10, "b": 4, "c": 7}), seed=0)
    assert Counter(out.labels) == {"a": 4, "b": 4, "c": 4}


def test_rebalance_balanced_is_identity():
    t = counts_table({"a": 5, "b": 5})
    assert rebalance(t, seed=3).X.tobytes() == t.X.tobytes()


def test_rebalance_deterministic():
    t = counts_table({"a": 30, "b": 9})
    assert rebalance(t, 11).X.tobytes() == rebalance(t, 11).X.tobytes()


@given(st.dictionaries(st.sampled_from("abcde"), st.integers(1, 30), min_size=1), st.integers(0, 2**32))
def test_rebalance_properties(counts, seed):
    t = counts_table(counts)
    out = rebalance(t, seed)
    c = Counter(out.labels)
    assert len(set(c.values())) == 1 and set(c) == set(counts)
    rows = out.X[:, 0]
    assert set(rows) <= set(t.X[:, 0]) and len(set(rows)) == rows.size
    assert (np.diff(rows) > 0).all()


def test_select_features_examples():
    imp, names = [0.5, 0.3, 0.15, 0.05], ["a", "b", "c", "d"]
    assert select_features(imp, names, top_k=2) == ["a", "b"]
    assert select_features(imp, names, min_importance=0.2) == ["a", "b"]
    assert sorted(select_features(imp, names, top_k=4)) == sorted(names)


def test_select_features_empty_is_error():
    with pytest.raises(PolicyError):
        select_features([0.6, 0.4], ["a", "b"], min_importance=0.9)
