import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from acerac.gaussian import (
    GaussianSpec,
    grad_log_density_wrt_mean,
    log_density,
    log_density_ratio,
    soft_truncate,
    truncated_ratio,
)

from conftest import central_difference, relative_error


def random_spd(rng, m):
    a = rng.normal(size=(m, m))
    return a @ a.T + m * 0.1 * np.eye(m)


def test_log_density_at_mean():
    for m in (1, 3, 5):
        g = GaussianSpec.from_cov(np.zeros(m), np.eye(m))
        assert math.isclose(log_density(np.zeros(m), g), -0.5 * m * math.log(2 * math.pi))


def test_log_density_standard_normal():
    g = GaussianSpec.from_cov([0.0], [[1.0]])
    assert math.isclose(log_density([1.0], g), -1.4189385332046727, rel_tol=1e-12)


def test_log_density_scalar_variance_four():
    g = GaussianSpec.from_cov([0.0], [[4.0]])
    # quadrature oracle: the density integrates to one
    total, _ = quad(lambda x: math.exp(log_density([x], g)), -20, 20, epsabs=1e-12)
    assert abs(total - 1.0) < 1e-9
    assert math.isclose(log_density([0.0], g), -1.612085713764618, rel_tol=1e-12)


def test_log_density_matches_scipy():
    from scipy.stats import multivariate_normal

    rng = np.random.default_rng(0)
    for m in (1, 2, 6):
        cov = random_spd(rng, m)
        mu = rng.normal(size=m)
        x = rng.normal(size=m)
        g = GaussianSpec.from_cov(mu, cov)
        assert math.isclose(log_density(x, g), multivariate_normal(mu, cov).logpdf(x), rel_tol=1e-10)


def test_dimension_errors():
    g = GaussianSpec.from_cov(np.zeros(2), np.eye(2))
    with pytest.raises(ValueError):
        log_density(np.zeros(3), g)
    with pytest.raises(ValueError):
        grad_log_density_wrt_mean(np.zeros(1), g)
    with pytest.raises(ValueError):
        log_density_ratio(np.zeros(2), g, GaussianSpec.from_cov(np.zeros(3), np.eye(3)))
    with pytest.raises(ValueError):
        GaussianSpec.from_cov(np.zeros(2), np.eye(3))
    with pytest.raises(ValueError):
        GaussianSpec.from_cov(np.zeros(2), np.array([[1.0, 2.0], [2.0, 1.0]]))


def test_cached_inverse_accuracy():
    rng = np.random.default_rng(1)
    for m in (1, 4, 8):
        g = GaussianSpec.from_cov(np.zeros(m), random_spd(rng, m))
        assert np.abs(g.cov @ g.inv - np.eye(m)).max() < 1e-8


def test_log_density_ratio_cases():
    g = GaussianSpec.from_cov([0.0], [[1.0]])
    assert log_density_ratio([0.3], g, g) == 0.0
    den = g.with_mean([1.0])
    assert math.isclose(log_density_ratio([1.0], g, den), -0.5)
    assert math.isclose(log_density_ratio([1.0], g, den), log_density([1.0], g) - log_density([1.0], den))
    # means placed symmetrically about x
    assert abs(log_density_ratio([1.0], g.with_mean([0.2]), g.with_mean([1.8]))) < 1e-15


def test_log_density_ratio_different_covariances():
    rng = np.random.default_rng(2)
    a = GaussianSpec.from_cov(rng.normal(size=3), random_spd(rng, 3))
    b = GaussianSpec.from_cov(rng.normal(size=3), random_spd(rng, 3))
    x = rng.normal(size=3)
    assert math.isclose(log_density_ratio(x, a, b), log_density(x, a) - log_density(x, b), rel_tol=1e-12)


def test_grad_wrt_mean_simple():
    g = GaussianSpec.from_cov([0.0], [[1.0]])
    np.testing.assert_allclose(grad_log_density_wrt_mean([2.0], g), [2.0])
    g = GaussianSpec.from_cov(np.ones(3), np.eye(3))
    np.testing.assert_array_equal(grad_log_density_wrt_mean(np.ones(3), g), np.zeros(3))


def test_grad_wrt_mean_finite_differences():
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(200):
        m = int(rng.integers(1, 9))
        cov = random_spd(rng, m)
        x = rng.normal(size=m)
        g = GaussianSpec.from_cov(rng.normal(size=m), cov)
        fd = central_difference(lambda mu: log_density(x, g.with_mean(mu)), g.mean)
        worst = max(worst, relative_error(grad_log_density_wrt_mean(x, g), fd))
    assert worst < 1e-4


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-2, 2), min_size=1, max_size=5), st.integers(0, 2**31))
def test_density_maximized_at_mean(delta, seed):
    rng = np.random.default_rng(seed)
    m = len(delta)
    g = GaussianSpec.from_cov(rng.normal(size=m), random_spd(rng, m))
    assert log_density(g.mean + np.array(delta), g) <= log_density(g.mean, g)


def test_density_integrates_to_one_over_ten_sigma():
    g = GaussianSpec.from_cov([0.7], [[0.09]])
    total, _ = quad(lambda x: math.exp(log_density([x], g)), 0.7 - 3.0, 0.7 + 3.0, epsabs=1e-12, limit=200)
    assert abs(total - 1.0) < 1e-6


def test_soft_truncate_values():
    assert soft_truncate(0.0, 2.0) == 0.0
    assert math.isclose(soft_truncate(1.0, 2.0), 0.9242343145200195, rel_tol=1e-12)
    assert math.isclose(soft_truncate(1e6, 2.0), 2.0)
    h = 1e-6
    assert math.isclose((soft_truncate(h, 2.0) - soft_truncate(-h, 2.0)) / (2 * h), 1.0, rel_tol=1e-9)


@settings(max_examples=200, deadline=None)
@given(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3), st.floats(1.01, 10.0))
def test_soft_truncate_properties(x, y, b):
    fx = soft_truncate(x, b)
    assert soft_truncate(-x, b) == -fx
    assert abs(fx) <= b
    assert abs(fx) <= abs(x) + 1e-15
    if x < y:
        assert soft_truncate(x, b) <= soft_truncate(y, b)


def test_truncated_ratio_clamp_is_invisible():
    # beyond the clamp psi_b is saturated to machine precision
    assert abs(truncated_ratio(30.0, 2.0) - truncated_ratio(1e4, 2.0)) < 1e-12
    assert abs(truncated_ratio(-30.0, 2.0) - 2 * np.tanh(np.exp(-1e4) / 2)) < 1e-12
    assert np.isfinite(truncated_ratio(1e308, 2.0))
