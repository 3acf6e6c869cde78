# -*- coding: utf-8 -*- vim: ts=8 sts=4 sw=4 si et tw=79
"""\
The maximally diffusive kernel p_max

Among all Gaussians within KL distance epsilon of the nominal next-state
kernel, the one of maximal entropy keeps the nominal mean and inflates the
covariance uniformly by a factor lam >= 1, which solves

    (n/2) (lam - 1 - ln lam) = epsilon

>>> result = build_pmax(GaussianKernel([0., 0.], [1., 1.]), 0.5)
>>> round(result.lam, 4)
2.3577
>>> abs(result.achieved_kl - 0.5) < 1e-8
True
>>> round(nominal_to_pmax_kl(2., 2), 5)
0.19315
"""
# Python compatibility:
from __future__ import absolute_import

# Standard library:
from collections import namedtuple
from math import isinf, isnan, log, log1p

# Local imports:
from visaplan.drfree.exceptions import InvalidParameter, RootNotConverged
from visaplan.drfree.gaussian import GaussianKernel, kl_gaussian

__all__ = [
    'ROOT_TOL',
    'PmaxResult',
    'solve_lambda',
    'build_pmax',
    'nominal_to_pmax_kl',
    'diffusion_bonus',
    ]

ROOT_TOL = 1e-10
MAX_BISECTIONS = 400
MAX_NEWTON = 8


def _check_dim(n):
    if isinstance(n, bool) or int(n) != n or n < 1:
        raise InvalidParameter(name='n', value=n,
                               reason='positive integer expected')
    return int(n)


def _excess(d):
    """
    lam - 1 - ln lam, for d = lam - 1 (without cancellation near lam = 1)
    """
    return d - log1p(d)


def solve_lambda(epsilon, n):
    """
    Inflation factor lam >= 1 for trust radius <epsilon> in dimension <n>

    >>> solve_lambda(0, 3)
    1.0
    >>> lam = solve_lambda(0.5, 2)
    >>> abs((lam - 1 - log(lam)) - 0.5) <= 1e-10
    True
    >>> solve_lambda(1.0, 2) > lam
    True
    >>> solve_lambda(-0.1, 2)
    Traceback (most recent call last):
    ...
    visaplan.drfree.exceptions.InvalidParameter: Invalid value for epsilon: -0.1 (non-negative number expected)
    """
    n = _check_dim(n)
    try:
        epsilon = float(epsilon)
    except (TypeError, ValueError):
        raise InvalidParameter(name='epsilon', value=epsilon,
                               reason='number expected')
    if isnan(epsilon) or isinf(epsilon) or epsilon < 0:
        raise InvalidParameter(name='epsilon', value=epsilon,
                               reason='non-negative number expected')
    if epsilon == 0:
        return 1.0
    half = 0.5 * n

    def residual(d):
        return half * _excess(d) - epsilon

    # bracket: residual(0) = -epsilon < 0
    lo, hi = 0.0, 1.0
    while residual(hi) < 0:
        lo, hi = hi, 2 * hi
    for i in range(MAX_BISECTIONS):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        r = residual(mid)
        if r == 0:
            lo = hi = mid
            break
        if r < 0:
            lo = mid
        else:
            hi = mid
        if abs(r) <= 0.25 * ROOT_TOL:
            lo = hi = mid
            break
    d = 0.5 * (lo + hi)
    # Newton polish; the derivative is half * d / (1 + d)
    r = residual(d)
    for i in range(MAX_NEWTON):
        if abs(r) <= 0.25 * ROOT_TOL or d <= 0:
            break
        step = r / (half * d / (1.0 + d))
        d_new = d - step
        r_new = residual(d_new)
        if abs(r_new) >= abs(r):
            break
        d, r = d_new, r_new
    if abs(r) > ROOT_TOL:
        raise RootNotConverged(what='lambda (epsilon=%r, n=%d)'
                                    % (epsilon, n),
                               residual=r)
    return 1.0 + d


def nominal_to_pmax_kl(lam, n):
    """
    D_KL(N(mu, Sigma) || N(mu, lam Sigma)) = (n/2) (1/lam - 1 + ln lam)

    This is the KL in the "other" direction; it is smaller than epsilon for
    lam > 1.

    >>> nominal_to_pmax_kl(1.0, 4)
    0.0
    >>> nominal_to_pmax_kl(0.5, 1)
    Traceback (most recent call last):
    ...
    visaplan.drfree.exceptions.InvalidParameter: Invalid value for lam: 0.5 (lam >= 1 expected)
    """
    n = _check_dim(n)
    lam = float(lam)
    if not lam >= 1:
        raise InvalidParameter(name='lam', value=lam,
                               reason='lam >= 1 expected')
    d = lam - 1.0
    return 0.5 * n * (log1p(d) - d / lam)


class PmaxResult(namedtuple('PmaxResult',
                            'kernel lam epsilon achieved_kl')):
    """
    The inflated kernel N(mu, lam Sigma) and its construction data
    """
    __slots__ = ()

    @property
    def beta(self):
        """
        Exponent of the equivalent tilting p_max ~ nominal**beta
        """
        return 1.0 / self.lam

    @property
    def entropy_gain(self):
        """
        Entropy of p_max minus entropy of the nominal kernel
        """
        return 0.5 * self.kernel.dim * log(self.lam)


def build_pmax(nominal, epsilon):
    """
    Build p_max from a nominal GaussianKernel and a trust radius

    >>> nominal = GaussianKernel([1., 2., 3.], [.5, 1., 2.])
    >>> res = build_pmax(nominal, 0)
    >>> res.kernel is nominal, res.lam, res.achieved_kl, res.beta
    (True, 1.0, 0.0, 1.0)
    """
    lam = solve_lambda(epsilon, nominal.dim)
    if lam == 1.0:
        return PmaxResult(nominal, 1.0, float(epsilon), 0.0)
    kernel = nominal.inflated(lam)
    achieved = kl_gaussian(kernel, nominal)
    return PmaxResult(kernel, lam, float(epsilon), achieved)


def diffusion_bonus(kernel):
    """
    The local diffusion objective: half the log-determinant of the covariance

    Inflating by lam raises it by (n/2) ln lam:

    >>> k = GaussianKernel([0., 0.], [1., 1.])
    >>> diffusion_bonus(k)
    0.0
    >>> round(diffusion_bonus(k.inflated(2.)) - log(2.), 12)
    0.0
    """
    return 0.5 * kernel.logdet()


if __name__ == '__main__':
    # Standard library:
    import doctest
    doctest.testmod()
