# -*- coding: utf-8 -*- vim: ts=8 sts=4 sw=4 si et tw=79
"""
Tests for visaplan.drfree.gaussian
"""
# Python compatibility:
from __future__ import absolute_import

# 3rd party:
import numpy as np
import pytest
from scipy import stats

# Local imports:
from visaplan.drfree.exceptions import (
    DimensionMismatch,
    InvalidParameter,
    NonFiniteValue,
    NotPositiveDefinite,
    )
from visaplan.drfree.gaussian import (
    COV_FLOOR,
    GaussianKernel,
    entropy,
    kl_gaussian,
    log_density,
    sample,
    wrap_angle,
    wrap_periodic,
    )


def random_kernel(rng, dim, diagonal=False):
    mean = rng.normal(size=dim)
    if diagonal:
        return GaussianKernel(mean, rng.uniform(0.2, 2.0, size=dim))
    a = rng.normal(size=(dim, dim))
    return GaussianKernel(mean, a.dot(a.T) + 0.5 * np.eye(dim))


def test_kl_closed_form_matches_monte_carlo():
    rng = np.random.default_rng(20240601)
    count = 100000
    for i in range(100):
        dim = int(rng.integers(1, 5))
        p = random_kernel(rng, dim, diagonal=bool(i % 2))
        q = random_kernel(rng, dim, diagonal=bool(i % 3 == 0))
        xs = sample(p, rng, count)
        ratio = log_density(p, xs) - log_density(q, xs)
        estimate = np.mean(ratio)
        stderr = np.std(ratio) / np.sqrt(count)
        assert abs(kl_gaussian(p, q) - estimate) <= 4 * stderr + 1e-3


def test_kl_is_zero_for_equal_kernels():
    p = GaussianKernel([1., 2.], [[2., .3], [.3, 1.]])
    q = GaussianKernel([1., 2.], [[2., .3], [.3, 1.]])
    assert kl_gaussian(p, q) == pytest.approx(0.0, abs=1e-12)
    assert kl_gaussian(p, p) == 0.0


def test_kl_is_nonnegative_and_asymmetric():
    rng = np.random.default_rng(5)
    for i in range(50):
        p = random_kernel(rng, 3)
        q = random_kernel(rng, 3)
        assert kl_gaussian(p, q) >= 0
    p = GaussianKernel([0.], [1.])
    q = GaussianKernel([0.], [4.])
    assert kl_gaussian(p, q) != pytest.approx(kl_gaussian(q, p))


def test_diagonal_and_full_paths_agree():
    rng = np.random.default_rng(11)
    for i in range(20):
        dim = int(rng.integers(1, 5))
        pm, qm = rng.normal(size=dim), rng.normal(size=dim)
        pv, qv = rng.uniform(.1, 3, size=dim), rng.uniform(.1, 3, size=dim)
        diag = kl_gaussian(GaussianKernel(pm, pv), GaussianKernel(qm, qv))
        full = kl_gaussian(GaussianKernel(pm, np.diag(pv)),
                           GaussianKernel(qm, np.diag(qv)))
        assert diag == pytest.approx(full, rel=1e-10, abs=1e-12)


def test_kl_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        kl_gaussian(GaussianKernel([0.], [1.]), GaussianKernel([0., 0.], 1.))


def test_entropy_gain_of_inflation():
    rng = np.random.default_rng(3)
    for dim in (1, 2, 4):
        k = random_kernel(rng, dim)
        for lam in (1.0, 1.5, 10.0):
            gain = entropy(k.inflated(lam)) - entropy(k)
            assert gain == pytest.approx(0.5 * dim * np.log(lam), abs=1e-10)


def test_entropy_is_a_python_float():
    k = GaussianKernel([0.], [1.])
    assert type(entropy(k)) is float
    assert type(kl_gaussian(k, k.inflated(2.))) is float
    assert round(entropy(k), 5) == 1.41894


def test_entropy_matches_scipy():
    k = GaussianKernel([1., -1.], [[2., .5], [.5, 1.]])
    expected = stats.multivariate_normal(k.mean, k.covariance).entropy()
    assert entropy(k) == pytest.approx(expected, rel=1e-12)


def test_log_density_matches_scipy():
    rng = np.random.default_rng(8)
    for diagonal in (False, True):
        k = random_kernel(rng, 3, diagonal=diagonal)
        xs = rng.normal(size=(10, 3))
        expected = stats.multivariate_normal(k.mean,
                                             k.covariance).logpdf(xs)
        assert np.allclose(log_density(k, xs), expected, rtol=1e-10)
        assert log_density(k, xs[0]) == pytest.approx(expected[0],
                                                      rel=1e-10)


def test_log_density_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        log_density(GaussianKernel([0., 0.], 1.), [0., 0., 0.])


def test_sample_moments():
    k = GaussianKernel([1., -2.], [[1., .4], [.4, .5]])
    xs = sample(k, 42, 100000)
    assert xs.shape == (100000, 2)
    assert np.allclose(xs.mean(axis=0), k.mean, atol=0.02)
    assert np.allclose(np.cov(xs.T), k.covariance, atol=0.02)


def test_sample_is_reproducible_per_seed():
    k = GaussianKernel([0., 0., 0.], 1.)
    assert np.array_equal(sample(k, 7, 10), sample(k, 7, 10))
    assert not np.array_equal(sample(k, 7, 10), sample(k, 8, 10))


def test_sample_count_must_be_positive():
    with pytest.raises(InvalidParameter):
        sample(GaussianKernel([0.], [1.]), 0, 0)


def test_rejects_non_positive_definite():
    with pytest.raises(NotPositiveDefinite):
        GaussianKernel([0., 0.], [[1., 2.], [2., 1.]])
    with pytest.raises(NotPositiveDefinite):
        GaussianKernel([0., 0.], [1., 0.])
    with pytest.raises(NotPositiveDefinite):
        GaussianKernel([0., 0.], [[1e-12, 0.], [0., 1.]])


def test_rejects_asymmetric_covariance():
    with pytest.raises(InvalidParameter):
        GaussianKernel([0., 0.], [[1., .5], [.4, 1.]])


def test_rejects_non_finite_mean():
    with pytest.raises(NonFiniteValue):
        GaussianKernel([0., np.nan], [1., 1.])


def test_diagonal_variances_are_floored():
    k = GaussianKernel([0.], [1e-12])
    assert k.variances[0] == COV_FLOOR


def test_kernels_are_immutable():
    k = GaussianKernel([0., 1.], [1., 2.])
    with pytest.raises(ValueError):
        k.mean[0] = 5.0


def test_wrap_periodic_moves_angles_near_the_centre():
    xs = np.array([[3.0, 7.0], [-3.0, -7.0]])
    wrapped = wrap_periodic(xs, (1,))
    assert np.all(np.abs(wrapped[:, 1]) <= np.pi)
    assert wrapped[:, 1] == pytest.approx([7.0 - 2 * np.pi, 2 * np.pi - 7.0])
    assert wrapped[:, 0].tolist() == [3.0, -3.0]
    assert xs[0, 1] == 7.0
    near = wrap_periodic(xs, (1,), center=xs)
    assert near[:, 1].tolist() == [7.0, -7.0]
    centred = wrap_periodic([[0.0, -3.0]], (1,), center=[0.0, 3.0])
    assert centred[0, 1] == pytest.approx(2 * np.pi - 3.0)
    assert wrap_angle(np.pi) == pytest.approx(-np.pi)



def test_marginal_of_full_covariance():
    cov = np.array([[2., .3, .1], [.3, 1., .2], [.1, .2, 3.]])
    k = GaussianKernel([1., 2., 3.], cov)
    m = k.marginal([0, 2])
    assert np.array_equal(m.mean, [1., 3.])
    assert np.array_equal(m.covariance, [[2., .1], [.1, 3.]])
