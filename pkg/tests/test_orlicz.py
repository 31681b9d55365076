import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bvwiener.errors import InvalidArgument
from bvwiener.montecarlo import MCConfig
from bvwiener.orlicz import (Sample, bridge_expectation, clamp, constant_sample_norm,
                             gaussian_pairing_factor, luxembourg_norm, luxembourg_stderr,
                             martingale_orlicz_convergence, pairing_constant,
                             pairing_inequality_check, slow_growth_holds, young_derivative,
                             young_function, young_inverse, young_mean)

# mpmath oracles
A1 = 0.5925904224975697
A2 = 1.5442947744449027
A_INV_1 = 1.455996861012971
PAIR_FACTOR = 0.7978845608028654

finite = st.floats(0.0, 1e6, allow_nan=False)


def test_young_values():
    assert young_function(0.0) == 0.0
    assert young_function(1.0) == pytest.approx(A1, rel=1e-13)
    assert young_function(2.0) == pytest.approx(A2, rel=1e-13)
    assert young_function(-2.0) == young_function(2.0)
    np.testing.assert_allclose(young_function(np.array([1.0, -2.0])), [A1, A2], rtol=1e-13)


def test_young_series_and_closed_form_agree_at_cutoff():
    x = math.expm1(0.5)
    lo, hi = young_function(x * (1 - 1e-12)), young_function(x * (1 + 1e-12))
    assert hi == pytest.approx(lo, rel=1e-10)


def test_young_derivative_matches_difference_quotient():
    x = np.array([0.01, 0.5, 3.0, 100.0])
    eps = 1e-6 * x
    fd = (young_function(x + eps) - young_function(x - eps)) / (2 * eps)
    np.testing.assert_allclose(young_derivative(x), fd, rtol=1e-7)


def test_young_inverse():
    assert young_inverse(1.0) == pytest.approx(A_INV_1, rel=1e-12)
    assert young_inverse(0.0) == 0.0
    for y in (1e-6, 0.3, 50.0):
        assert young_function(young_inverse(y)) == pytest.approx(y, rel=1e-11)
    with pytest.raises(InvalidArgument):
        young_inverse(-1.0)


@given(finite, finite, st.floats(0.0, 1.0))
def test_young_is_convex(x, y, lam):
    mid = young_function(lam * x + (1 - lam) * y)
    assert mid <= lam * young_function(x) + (1 - lam) * young_function(y) + 1e-9 * (1 + mid)


@given(finite, finite)
def test_young_is_superadditive(x, y):
    s = young_function(x + y)
    assert s >= young_function(x) + young_function(y) - 1e-9 * (1 + s)


@given(st.floats(1e-3, 1e5), st.floats(1.0, 10.0))
def test_young_ratio_grows(x, c):
    assert young_function(c * x) / (c * x) >= young_function(x) / x * (1 - 1e-12)


@settings(max_examples=30)
@given(st.floats(1e-3, 1e3), st.integers(0, 2**32 - 1))
def test_norm_homogeneity(c, seed):
    X = np.random.default_rng(seed).standard_t(3, size=200)
    assert luxembourg_norm(c * X) == pytest.approx(c * luxembourg_norm(X), rel=1e-9)


def test_norm_of_constants():
    for c in (1.0, -2.5, 1e-8):
        assert luxembourg_norm(np.full(10, c)) == pytest.approx(constant_sample_norm(c), rel=1e-11)
    assert constant_sample_norm(1.0) == pytest.approx(1 / A_INV_1, rel=1e-12)
    assert luxembourg_norm(np.zeros(5)) == 0.0


def test_norm_is_defining_root():
    X = np.random.default_rng(1).normal(size=1000)
    k = luxembourg_norm(X)
    assert young_mean(X, k) == pytest.approx(1.0, abs=1e-10)


def test_norm_monotone_under_domination():
    rng = np.random.default_rng(2)
    for _ in range(20):
        Y = rng.standard_cauchy(300)
        X = Y * rng.uniform(0, 1, 300)
        assert luxembourg_norm(X) <= luxembourg_norm(Y) * (1 + 1e-12)


def test_slow_growth():
    rng = np.random.default_rng(3)
    for _ in range(20):
        X = rng.lognormal(0.0, 1.5, 500)
        k1, k2 = np.sort(rng.uniform(0.1, 10.0, 2))
        assert slow_growth_holds(X, k1, k2)
    with pytest.raises(InvalidArgument):
        slow_growth_holds(X, 2.0, 1.0)


def test_weighted_sample():
    v = np.array([1.0, 3.0])
    dup = luxembourg_norm(np.array([1.0, 1.0, 1.0, 3.0]))
    assert luxembourg_norm(Sample(v, [0.75, 0.25])) == pytest.approx(dup, rel=1e-11)
    with pytest.raises(InvalidArgument):
        Sample(v, [0.5, 0.6])
    with pytest.raises(InvalidArgument):
        Sample([])
    with pytest.raises(InvalidArgument):
        Sample([1.0, np.inf])


def test_norm_stderr_shrinks():
    rng = np.random.default_rng(4)
    small = luxembourg_stderr(rng.normal(size=1000))
    big = luxembourg_stderr(rng.normal(size=100000))
    assert big < small / 5
    assert luxembourg_stderr(np.zeros(3)) == 0.0


def test_pairing_constant():
    assert gaussian_pairing_factor() == pytest.approx(PAIR_FACTOR, rel=1e-12)
    assert pairing_constant(1.0) == pytest.approx(2 * (1 + PAIR_FACTOR), rel=1e-12)
    with pytest.raises(InvalidArgument):
        pairing_constant(0.0)


def test_pairing_zero_and_self():
    rep = pairing_inequality_check(lambda z, z2: np.zeros_like(z), 1.0, MCConfig(1000, seed=1))
    assert rep.e_abs_xy == 0.0 and rep.norm_x == 0.0 and rep.passed
    rep = pairing_inequality_check(lambda z, z2: 2.0 * z, 2.0, MCConfig(20000, seed=2))
    assert rep.passed
    assert rep.e_abs_xy == pytest.approx(4.0, rel=0.05)


def test_pairing_heavy_tails():
    def heavy(z, z2):
        return np.sign(z2) * np.exp(z2**2 / 3.0) * (1 + np.abs(z))

    for seed in range(10):
        assert pairing_inequality_check(heavy, 1.5, MCConfig(20000, seed=seed)).passed


def test_bridge_expectation():
    np.testing.assert_allclose(bridge_expectation(lambda x: x**2, np.array([0.0, 1.0]), 2.0),
                               [4.0, 5.0], rtol=1e-12)


def test_martingale_dyadic_time_is_exact():
    rep = martingale_orlicz_convergence(0.5, clamp, 4, MCConfig(500, seed=1))
    assert rep.norms == [0.0] * 4 and rep.passed


def test_martingale_constant_phi():
    rep = martingale_orlicz_convergence(1 / 3, lambda x: np.ones_like(x), 4, MCConfig(500))
    np.testing.assert_allclose(rep.norms, 0.0, atol=1e-12)


def test_martingale_decreases():
    rep = martingale_orlicz_convergence(1 / 3, clamp, 5, MCConfig(5000, seed=2))
    assert rep.monotone
    assert rep.norms[-1] < rep.norms[0] / 3
    assert [r["level"] for r in rep.rows()] == [1, 2, 3, 4, 5]


def test_martingale_validation():
    with pytest.raises(InvalidArgument):
        martingale_orlicz_convergence(1.0, clamp, 3, MCConfig(10))
    with pytest.raises(InvalidArgument):
        martingale_orlicz_convergence(0.3, clamp, 0, MCConfig(10))
