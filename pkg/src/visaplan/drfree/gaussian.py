# -*- coding: utf-8 -*- vim: ts=8 sts=4 sw=4 si et tw=79
"""\
Gaussian kernels: sampling, log-density, entropy, KL divergence

A GaussianKernel is the unit of all probabilistic computation in this
package: the nominal next-state distribution of the learned model, the
maximally diffusive prior built from it, the goal distribution, and the
cost-channel distribution.

The covariance is either a vector of variances (the diagonal fast path; the
learned models produce those) or a full symmetric matrix.  Diagonal variances
are floored at COV_FLOOR; full matrices must have all eigenvalues >= COV_FLOOR
and are rejected otherwise (no silent projection).

>>> p = GaussianKernel([0., 0.], [1., 1.])
>>> q = GaussianKernel([0., 0.], [2., 2.])
>>> round(kl_gaussian(p, q), 5)
0.19315
>>> kl_gaussian(p, p)
0.0
>>> round(kl_gaussian(GaussianKernel([1., 0.], [1., 1.]), p), 12)
0.5
>>> round(entropy(GaussianKernel([0.], [1.])), 5)
1.41894
>>> round(log_density(GaussianKernel([0.], [1.]), [0.]), 5)
-0.91894
"""
# Python compatibility:
from __future__ import absolute_import

# 3rd party:
import numpy as np
from scipy import linalg

# Local imports:
from visaplan.drfree.exceptions import (
    DimensionMismatch,
    InvalidParameter,
    NonFiniteValue,
    NotPositiveDefinite,
    )

__all__ = [
    'COV_FLOOR',
    'GaussianKernel',
    'kl_gaussian',
    'entropy',
    'sample',
    'log_density',
    'make_rng',
    'wrap_angle',
    'wrap_periodic',
    ]

COV_FLOOR = 1e-8
SYMMETRY_RTOL = 1e-12
LOG_2PI = np.log(2 * np.pi)


def make_rng(rng_seed):
    """
    Return a numpy Generator for a seed (or the given Generator itself)

    >>> rng = make_rng(3)
    >>> make_rng(rng) is rng
    True
    """
    if isinstance(rng_seed, np.random.Generator):
        return rng_seed
    return np.random.default_rng(rng_seed)


def wrap_angle(theta):
    """
    Angles mapped to [-pi, pi)

    >>> wrap_angle([0.5, 7.0, -3.5]).round(6).tolist()
    [0.5, 0.716815, 2.783185]
    """
    return (np.asarray(theta, dtype=float) + np.pi) % (2 * np.pi) - np.pi


def wrap_periodic(xs, periodic, center=None):
    """
    A copy of the states <xs> (coordinates in the last axis) with the
    periodic coordinates moved to within pi of <center> (default: 0)

    >>> xs = [[3.1, 1.], [-3.1, 1.]]
    >>> wrap_periodic(xs, (0,), center=[3., 0.]).round(4).tolist()
    [[3.1, 1.0], [3.1832, 1.0]]
    >>> wrap_periodic(xs, ()).tolist()
    [[3.1, 1.0], [-3.1, 1.0]]
    """
    xs = np.array(xs, dtype=float)
    idx = list(periodic)
    if not idx:
        return xs
    if center is None:
        base = 0.0
    else:
        base = np.asarray(center, dtype=float)[..., idx]
    xs[..., idx] = base + wrap_angle(xs[..., idx] - base)
    return xs


def _frozen(arr):
    arr = np.array(arr, dtype=float)
    arr.setflags(write=False)
    return arr


class GaussianKernel(object):
    """
    Mean vector and covariance of a Gaussian distribution

    >>> k = GaussianKernel([1., 2.], [0.5, 0.25])
    >>> k.dim, k.is_diagonal
    (2, True)
    >>> k.covariance
    array([[0.5 , 0.  ],
           [0.  , 0.25]])

    A scalar covariance means an isotropic one:

    >>> GaussianKernel([0., 0., 0.], 2.).variances
    array([2., 2., 2.])

    Non-positive variances are rejected:

    >>> GaussianKernel([0.], [-1.])
    Traceback (most recent call last):
    ...
    visaplan.drfree.exceptions.NotPositiveDefinite: Covariance of GaussianKernel is not positive definite
    """
    __slots__ = ('mean', '_var', '_cov', '_chol', '_logdet')

    def __init__(self, mean, covariance):
        mean = np.atleast_1d(np.asarray(mean, dtype=float))
        if mean.ndim != 1:
            raise DimensionMismatch(what='mean (ndim)', left=mean.ndim,
                                    right=1)
        if not np.all(np.isfinite(mean)):
            raise NonFiniteValue(what='GaussianKernel mean')
        n = mean.shape[0]
        cov = np.asarray(covariance, dtype=float)
        if cov.ndim == 0:
            cov = np.full(n, float(cov))
        self._chol = None
        self._logdet = None
        if cov.ndim == 1:
            if cov.shape[0] != n:
                raise DimensionMismatch(what='covariance', left=cov.shape[0],
                                        right=n)
            if not np.all(np.isfinite(cov)) or np.any(cov <= 0):
                raise NotPositiveDefinite(what='GaussianKernel')
            self._var = _frozen(np.maximum(cov, COV_FLOOR))
            self._cov = None
        elif cov.ndim == 2:
            if cov.shape != (n, n):
                raise DimensionMismatch(what='covariance', left=cov.shape,
                                        right=(n, n))
            if not np.all(np.isfinite(cov)):
                raise NotPositiveDefinite(what='GaussianKernel')
            scale = max(np.max(np.abs(cov)), COV_FLOOR)
            if np.max(np.abs(cov - cov.T)) > SYMMETRY_RTOL * scale:
                raise InvalidParameter(name='covariance', value='...',
                                       reason='not symmetric')
            cov = 0.5 * (cov + cov.T)
            if np.linalg.eigvalsh(cov)[0] < COV_FLOOR:
                raise NotPositiveDefinite(what='GaussianKernel')
            self._var = None
            self._cov = _frozen(cov)
        else:
            raise DimensionMismatch(what='covariance (ndim)', left=cov.ndim,
                                    right=2)
        self.mean = _frozen(mean)

    # ------------------------------------------ [ properties ... [
    @property
    def dim(self):
        return self.mean.shape[0]

    @property
    def is_diagonal(self):
        return self._var is not None

    @property
    def variances(self):
        if self._var is not None:
            return self._var
        return np.diag(self._cov).copy()

    @property
    def covariance(self):
        if self._var is not None:
            return np.diag(self._var)
        return self._cov

    def cholesky(self):
        """
        Lower Cholesky factor (a vector of standard deviations for diagonal
        kernels)
        """
        if self._chol is None:
            if self._var is not None:
                self._chol = _frozen(np.sqrt(self._var))
            else:
                try:
                    self._chol = _frozen(linalg.cholesky(self._cov,
                                                         lower=True))
                except linalg.LinAlgError:
                    raise NotPositiveDefinite(what='GaussianKernel')
        return self._chol

    def cholesky_matrix(self):
        chol = self.cholesky()
        if chol.ndim == 1:
            return np.diag(chol)
        return chol

    def logdet(self):
        if self._logdet is None:
            if self._var is not None:
                self._logdet = float(np.sum(np.log(self._var)))
            else:
                self._logdet = 2.0 * float(np.sum(np.log(np.diag(
                    self.cholesky()))))
        return self._logdet
    # ------------------------------------------ ] ... properties ]

    def inflated(self, factor):
        """
        The same mean, covariance scaled by <factor>

        >>> GaussianKernel([1.], [2.]).inflated(1.5).variances
        array([3.])
        """
        if not factor > 0:
            raise InvalidParameter(name='factor', value=factor,
                                   reason='positive number expected')
        if self._var is not None:
            return GaussianKernel(self.mean, self._var * factor)
        return GaussianKernel(self.mean, self._cov * factor)

    def marginal(self, indices):
        """
        The marginal kernel of the given coordinates

        >>> GaussianKernel([1., 2., 3.], [1., 2., 3.]).marginal([0, 2]).variances
        array([1., 3.])
        """
        idx = np.asarray(indices, dtype=int).reshape(-1)
        if self._var is not None:
            return GaussianKernel(self.mean[idx], self._var[idx])
        return GaussianKernel(self.mean[idx], self._cov[np.ix_(idx, idx)])

    def allclose(self, other, atol=1e-12):
        """
        Parameters match within <atol>

        >>> GaussianKernel([0.], [1.]).allclose(GaussianKernel([0.], [[1.]]))
        True
        """
        return (self.dim == other.dim
                and np.allclose(self.mean, other.mean, rtol=0, atol=atol)
                and np.allclose(self.covariance, other.covariance,
                                rtol=0, atol=atol))

    def __repr__(self):
        if self._var is not None:
            return 'GaussianKernel(mean=%s, variances=%s)' % (
                np.array2string(self.mean, precision=4),
                np.array2string(self._var, precision=4))
        return 'GaussianKernel(mean=%s, covariance=<%dx%d>)' % (
            np.array2string(self.mean, precision=4), self.dim, self.dim)


def _check_dims(p, q, what='kernels'):
    if p.dim != q.dim:
        raise DimensionMismatch(what=what, left=p.dim, right=q.dim)


def kl_gaussian(p, q):
    """
    Closed-form D_KL(p || q) for two Gaussian kernels

    >>> p = GaussianKernel([0., 0.], [[2., .5], [.5, 1.]])
    >>> kl_gaussian(p, p) < 1e-12
    True
    >>> kl_gaussian(p, GaussianKernel([0.], [1.]))
    Traceback (most recent call last):
    ...
    visaplan.drfree.exceptions.DimensionMismatch: Dimension mismatch for kernels: 2 != 1
    """
    _check_dims(p, q)
    if p is q:
        return 0.0
    n = p.dim
    diff = q.mean - p.mean
    if p.is_diagonal and q.is_diagonal:
        vp = p.variances
        vq = q.variances
        res = 0.5 * float(np.sum(vp / vq + diff * diff / vq - 1.0
                                 + np.log(vq) - np.log(vp)))
    else:
        lq = q.cholesky_matrix()
        a = linalg.solve_triangular(lq, p.cholesky_matrix(), lower=True)
        b = linalg.solve_triangular(lq, diff, lower=True)
        res = 0.5 * (float(np.sum(a * a)) + float(np.dot(b, b)) - n
                     + q.logdet() - p.logdet())
    return max(res, 0.0)


def entropy(p):
    """
    Differential entropy n/2 (1 + ln 2 pi) + 1/2 ln det Sigma

    Scaling the covariance by lam adds (n/2) ln lam:

    >>> k = GaussianKernel([5., 5.], [1., 3.])
    >>> abs(entropy(k.inflated(2.)) - entropy(k) - np.log(2.)) < 1e-12
    True
    """
    return float(0.5 * p.dim * (1.0 + LOG_2PI) + 0.5 * p.logdet())


def sample(p, rng_seed, count):
    """
    Draw <count> samples; returns an array of shape (count, dim)

    >>> k = GaussianKernel([0., 0.], [1., 1.])
    >>> sample(k, 7, 1).shape
    (1, 2)
    >>> bool(np.all(sample(k, 7, 5) == sample(k, 7, 5)))
    True
    """
    count = int(count)
    if count < 1:
        raise InvalidParameter(name='count', value=count,
                               reason='positive integer expected')
    rng = make_rng(rng_seed)
    z = rng.standard_normal((count, p.dim))
    chol = p.cholesky()
    if chol.ndim == 1:
        return p.mean + z * chol
    return p.mean + z.dot(chol.T)


def log_density(p, x):
    """
    Gaussian log-density at a point (float) or at the rows of a 2-d array

    >>> k = GaussianKernel([1.], [4.])
    >>> log_density(k, [1.]) > log_density(k, [1.5])
    True
    >>> log_density(k, [[1.], [3.]]).shape
    (2,)
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    xs = np.atleast_2d(x)
    if xs.shape[-1] != p.dim:
        raise DimensionMismatch(what='log_density argument',
                                left=xs.shape[-1], right=p.dim)
    diff = xs - p.mean
    chol = p.cholesky()
    if chol.ndim == 1:
        maha = np.sum((diff / chol) ** 2, axis=1)
    else:
        sol = linalg.solve_triangular(chol, diff.T, lower=True)
        maha = np.sum(sol * sol, axis=0)
    res = -0.5 * (p.dim * LOG_2PI + p.logdet() + maha)
    if single:
        return float(res[0])
    return res
