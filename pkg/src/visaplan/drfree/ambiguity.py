# -*- coding: utf-8 -*- vim: ts=8 sts=4 sw=4 si et tw=79
"""\
The cost of ambiguity: the inner maximisation of the robust control problem

For a state-action pair, the adversary may replace the nominal next-state
kernel by any kernel within KL radius eta.  The worst-case free energy is
obtained from the scalar convex dual

    V(alpha) = alpha ln E_nominal[exp(z / alpha)] + alpha eta
    z(x')    = ln nominal(x') - ln generative(x') + cost_to_go(x')

which we estimate with Monte Carlo samples drawn from the nominal kernel and
minimise over ln(alpha) by golden-section search.  The same samples are used
for every alpha (common random numbers), which keeps the estimated dual
convex in alpha.

>>> spec = AmbiguitySpec(eta_dyn=0.3, delta_cost=0.5, sigma_cost=1.0, rho=2)
>>> round(augmented_radius(spec), 12)
0.725

With generative == nominal and a constant cost-to-go, the dual is flat:

>>> k = GaussianKernel([0., 0.], [1., 1.])
>>> res = cost_of_ambiguity(k, k, constant_cost(2.5), 0.0, MCSettings(64))
>>> round(res.c_tilde, 9), res.boundary
(2.5, 'upper')
"""
# Python compatibility:
from __future__ import absolute_import

# Standard library:
from collections import namedtuple
from math import isinf, isnan, log

# 3rd party:
import numpy as np
from scipy.special import logsumexp

# Local imports:
from visaplan.drfree.exceptions import (
    DimensionMismatch,
    InvalidParameter,
    NonFiniteValue,
    )
from visaplan.drfree.gaussian import (
    COV_FLOOR,
    GaussianKernel,
    kl_gaussian,
    log_density,
    sample,
    )

# Logging / Debugging:
from visaplan.drfree.log import getLogSupport

logger, debug_active, DEBUG = getLogSupport(fn=__file__)

__all__ = [
    # types:
    'AmbiguitySpec',
    'MCSettings',
    'AmbiguityCost',
    'FreeEnergy',
    # radii:
    'augmented_radius',
    'augmented_kl_check',
    'eta_from_goal',
    'eta_from_goal_batch',
    # the dual:
    'vectorized',
    'constant_cost',
    'evaluate_cost',
    'dual_terms',
    'inflation_log_ratio',
    'dual_value',
    'cost_of_ambiguity',
    'cost_of_ambiguity_batch',
    'golden_section_batch',
    'psi_cost_channel',
    # ambiguity-free reference:
    'free_energy_terms',
    'ambiguity_free_value',
    ]

INV_PHI = (np.sqrt(5.0) - 1.0) / 2.0
FEASIBILITY_TOL = 1e-12
EDGE_RTOL = 1e-12


def _nonneg(name, val):
    try:
        val = float(val)
    except (TypeError, ValueError):
        raise InvalidParameter(name=name, value=val, reason='number expected')
    if isnan(val) or isinf(val) or val < 0:
        raise InvalidParameter(name=name, value=val,
                               reason='non-negative number expected')
    return val


def _positive(name, val):
    val = _nonneg(name, val)
    if val == 0:
        raise InvalidParameter(name=name, value=val,
                               reason='positive number expected')
    return val


# ------------------------------------------------------- [ types ... [
class AmbiguitySpec(namedtuple('AmbiguitySpec',
                               'eta_dyn delta_cost sigma_cost rho')):
    """
    Radii of the ambiguity set for one state-action pair

    eta_dyn -- dynamics KL radius (before scaling by rho)
    delta_cost -- bound on stage cost perturbations
    sigma_cost -- standard deviation of the cost channel
    rho -- execution-time scaling of eta_dyn

    >>> AmbiguitySpec(eta_dyn=0.3).effective_radius
    0.3
    >>> AmbiguitySpec(sigma_cost=0)
    Traceback (most recent call last):
    ...
    visaplan.drfree.exceptions.InvalidParameter: Invalid value for sigma_cost: 0.0 (positive number expected)
    """
    __slots__ = ()

    def __new__(cls, eta_dyn=0.0, delta_cost=0.0, sigma_cost=1.0, rho=1.0):
        return super(AmbiguitySpec, cls).__new__(
            cls,
            _nonneg('eta_dyn', eta_dyn),
            _nonneg('delta_cost', delta_cost),
            _positive('sigma_cost', sigma_cost),
            _nonneg('rho', rho))

    @property
    def effective_radius(self):
        return self.rho * self.eta_dyn

    @property
    def cost_radius(self):
        return self.delta_cost ** 2 / (2.0 * self.sigma_cost ** 2)


class MCSettings(namedtuple('MCSettings', 'count seed bracket iterations')):
    """
    Monte Carlo and line search settings of the dual solver

    >>> MCSettings()
    MCSettings(count=256, seed=0, bracket=(0.001, 1000.0), iterations=60)
    """
    __slots__ = ()

    def __new__(cls, count=256, seed=0, bracket=(1e-3, 1e3), iterations=60):
        count = int(count)
        if count < 1:
            raise InvalidParameter(name='count', value=count,
                                   reason='positive integer expected')
        lo, hi = [float(v) for v in bracket]
        if not 0 < lo < hi:
            raise InvalidParameter(name='bracket', value=bracket,
                                   reason='0 < low < high expected')
        iterations = int(iterations)
        if iterations < 1:
            raise InvalidParameter(name='iterations', value=iterations,
                                   reason='positive integer expected')
        return super(MCSettings, cls).__new__(cls, count, seed, (lo, hi),
                                              iterations)

    @classmethod
    def from_config(cls, config, seed=0):
        return cls(count=config['mc_samples'],
                   seed=seed,
                   bracket=config['alpha_bracket'],
                   iterations=config['golden_iterations'])


AmbiguityCost = namedtuple('AmbiguityCost',
                           'c_tilde multiplier eta_used dual_evals'
                           ' mc_samples boundary')
AmbiguityCost.__doc__ = """\
Result of the inner maximisation for one state-action pair

c_tilde -- the minimal dual value, i.e. the cost of ambiguity
multiplier -- the minimising alpha (0.0 for the ess-sup limit)
eta_used -- the radius used in the dual
dual_evals -- number of dual evaluations
mc_samples -- number of Monte Carlo samples
boundary -- 'lower', 'upper' or None: did the minimum hit the bracket?
"""

FreeEnergy = namedtuple('FreeEnergy', 'complexity expected_cost total')
# ------------------------------------------------------- ] ... types ]


# ------------------------------------------------------- [ radii ... [
def augmented_radius(spec):
    """
    KL budget covering dynamics and cost perturbations jointly:
    rho * eta_dyn + delta**2 / (2 sigma**2)

    >>> augmented_radius(AmbiguitySpec(eta_dyn=0.3))
    0.3
    >>> augmented_radius(AmbiguitySpec(delta_cost=0.5))
    0.125
    """
    return spec.effective_radius + spec.cost_radius


def augmented_kl_check(nominal_dyn, true_dyn, delta_c, spec):
    """
    KL of the augmented (state, running cost) kernel, and whether it lies
    within the augmented radius

    >>> k = GaussianKernel([0.], [1.])
    >>> augmented_kl_check(k, k, 0.0, AmbiguitySpec())
    (0.0, True)
    """
    if nominal_dyn.dim != true_dyn.dim:
        raise DimensionMismatch(what='dynamics kernels',
                                left=true_dyn.dim, right=nominal_dyn.dim)
    delta_c = float(delta_c)
    kl_aug = (kl_gaussian(true_dyn, nominal_dyn)
              + delta_c ** 2 / (2.0 * spec.sigma_cost ** 2))
    radius = augmented_radius(spec)
    return kl_aug, kl_aug <= radius + FEASIBILITY_TOL * (1.0 + radius)


def eta_from_goal(goal, nominal, rho):
    """
    Ambiguity radius from the distance of the nominal prediction to the goal
    distribution: rho * KL(goal || nominal)

    >>> goal = GaussianKernel([1., 1.], [.01, .01])
    >>> nominal = GaussianKernel([0., 0.], [.1, .1])
    >>> eta_from_goal(goal, nominal, 0)
    0.0
    >>> eta_from_goal(goal, nominal, 2) == 2 * eta_from_goal(goal, nominal, 1)
    True
    """
    rho = _nonneg('rho', rho)
    if goal.dim != nominal.dim:
        raise DimensionMismatch(what='goal kernel', left=goal.dim,
                                right=nominal.dim)
    if rho == 0:
        return 0.0
    return rho * kl_gaussian(goal, nominal)


def eta_from_goal_batch(goal, means, variances, rho):
    """
    eta_from_goal for several nominal kernels which share their diagonal
    variances; <means> has one row per kernel

    >>> goal = GaussianKernel([1., 1.], [.01, .01])
    >>> means = np.array([[0., 0.], [1., 1.]])
    >>> etas = eta_from_goal_batch(goal, means, [.1, .1], 2.)
    >>> ref = eta_from_goal(goal, GaussianKernel([0., 0.], [.1, .1]), 2.)
    >>> bool(abs(etas[0] - ref) < 1e-12), bool(etas[1] < etas[0])
    (True, True)
    """
    rho = _nonneg('rho', rho)
    means = np.atleast_2d(np.asarray(means, dtype=float))
    variances = np.maximum(np.asarray(variances, dtype=float).reshape(-1),
                           COV_FLOOR)
    if means.shape[1] != goal.dim or variances.shape[0] != goal.dim:
        raise DimensionMismatch(what='goal kernel', left=goal.dim,
                                right=means.shape[1])
    if rho == 0:
        return np.zeros(means.shape[0])
    if not goal.is_diagonal:
        return np.array([rho * kl_gaussian(goal, GaussianKernel(m, variances))
                         for m in means])
    vp = goal.variances
    diff = means - goal.mean
    kl = 0.5 * np.sum(vp / variances + diff * diff / variances - 1.0
                      + np.log(variances) - np.log(vp), axis=1)
    return rho * np.maximum(kl, 0.0)

# ------------------------------------------------------- ] ... radii ]


# ---------------------------------------------------- [ the dual ... [
def vectorized(func):
    """
    Mark a cost-to-go function as accepting a (count, dim) array of states
    and returning a (count,) array of costs.  Unmarked functions are called
    once per state.
    """
    func.vectorized = True
    return func


def constant_cost(value):
    """
    A (vectorized) cost-to-go function with a constant value

    >>> constant_cost(2.0)(np.zeros((3, 2)))
    array([2., 2., 2.])
    """
    value = float(value)

    @vectorized
    def cost(xs):
        return np.full(np.shape(xs)[0], value)
    return cost


def evaluate_cost(cost_to_go, xs):
    if getattr(cost_to_go, 'vectorized', False):
        vals = np.asarray(cost_to_go(xs), dtype=float).reshape(-1)
        if vals.shape[0] != xs.shape[0]:
            raise DimensionMismatch(what='cost_to_go result',
                                    left=vals.shape[0], right=xs.shape[0])
    else:
        vals = np.array([float(cost_to_go(x)) for x in xs])
    if not np.all(np.isfinite(vals)):
        raise NonFiniteValue(what='cost_to_go')
    return vals


def dual_terms(nominal, generative, cost_to_go, mc, samples=None):
    """
    The random variable z of the dual, evaluated at Monte Carlo samples
    drawn from the nominal kernel (seed and count from <mc>)
    """
    if generative.dim != nominal.dim:
        raise DimensionMismatch(what='generative kernel',
                                left=generative.dim, right=nominal.dim)
    if samples is None:
        samples = sample(nominal, mc.seed, mc.count)
    z = (log_density(nominal, samples) - log_density(generative, samples)
         + evaluate_cost(cost_to_go, samples))
    return z


def inflation_log_ratio(noise, lam):
    """
    ln p(x) - ln p_lam(x) at the points x = mean + std * noise, where p is a
    diagonal Gaussian and p_lam the same one with its covariance inflated by
    lam; the result does not depend on the mean or the variances

    >>> k = GaussianKernel([1., 2.], [.5, 2.])
    >>> noise = np.array([[0.3, -1.2], [2., 0.]])
    >>> x = k.mean + noise * np.sqrt(k.variances)
    >>> ref = log_density(k, x) - log_density(k.inflated(3.), x)
    >>> diff = inflation_log_ratio(noise, 3.) - ref
    >>> bool(np.all(np.abs(diff) < 1e-12))
    True
    """
    noise = np.atleast_2d(np.asarray(noise, dtype=float))
    lam = float(lam)
    if lam == 1.0:
        return np.zeros(noise.shape[0])
    return (0.5 * noise.shape[1] * log(lam)
            - 0.5 * (1.0 - 1.0 / lam) * np.sum(noise * noise, axis=1))


def _dual_curve(z, alpha, eta, cost_sigma=None):
    """
    Dual values for rows of terms <z> (shape K x M) at multipliers <alpha>
    (shape K)
    """
    m = z.shape[1]
    val = alpha * (logsumexp(z / alpha[:, None], axis=1) - log(m))
    val = val + alpha * eta
    if cost_sigma:
        val = val + psi_cost_channel(alpha, 0.0, cost_sigma)
    return val


def psi_cost_channel(alpha, stage_cost, sigma):
    """
    Dual contribution of the Gaussian cost channel: stage_cost + sigma**2/(2 alpha)

    >>> psi_cost_channel(0.5, 1.0, 1.0)
    2.0
    """
    return stage_cost + sigma ** 2 / (2.0 * alpha)


def dual_value(alpha, nominal, generative, cost_to_go, eta, mc,
               cost_sigma=None):
    """
    Monte Carlo estimate of the dual at one multiplier value

    >>> k = GaussianKernel([0.], [1.])
    >>> round(dual_value(3.0, k, k, constant_cost(1.0), 0.5, MCSettings(16)), 9)
    2.5
    """
    alpha = _positive('alpha', alpha)
    eta = _nonneg('eta', eta)
    z = dual_terms(nominal, generative, cost_to_go, mc)
    return float(_dual_curve(z[None, :], np.array([alpha]), np.array([eta]),
                             cost_sigma)[0])


def golden_section_batch(func, lo, hi, iterations, size):
    """
    Golden-section search for the minima of <size> unimodal functions at
    once, each over the same interval [lo, hi].

    func -- maps an array of <size> abscissae to <size> values

    Returns (argmins, minima, evaluations); the endpoints are checked, too.

    >>> centres = np.array([0.25, 0.5, 2.0])
    >>> x, y, n = golden_section_batch(lambda t: (t - centres) ** 2, 0., 1., 60, 3)
    >>> np.round(x, 6)
    array([0.25, 0.5 , 1.  ])
    """
    a = np.full(size, float(lo))
    b = np.full(size, float(hi))
    c = b - INV_PHI * (b - a)
    d = a + INV_PHI * (b - a)
    fc = func(c)
    fd = func(d)
    evals = 2
    for i in range(iterations):
        left = fc < fd
        b = np.where(left, d, b)
        a = np.where(left, a, c)
        x_new = np.where(left, b - INV_PHI * (b - a), a + INV_PHI * (b - a))
        fx = func(x_new)
        evals += 1
        c, d, fc, fd = (np.where(left, x_new, d),
                        np.where(left, c, x_new),
                        np.where(left, fx, fd),
                        np.where(left, fc, fx))
    inner = fc <= fd
    x = np.where(inner, c, d)
    y = np.where(inner, fc, fd)
    # endpoints win ties; the upper one wins on flat functions
    flo = func(a * 0 + lo)
    fhi = func(b * 0 + hi)
    evals += 2
    tol = EDGE_RTOL * (1.0 + np.abs(y))
    at_hi = fhi <= y + tol
    at_lo = (flo <= y + tol) & (~at_hi | (flo < fhi - tol))
    at_hi = at_hi & ~at_lo
    x = np.where(at_hi, hi, np.where(at_lo, lo, x))
    y = np.where(at_hi, np.minimum(fhi, y),
                 np.where(at_lo, np.minimum(flo, y), y))
    return x, y, evals


def cost_of_ambiguity_batch(terms, etas, mc, cost_sigma=None):
    """
    Solve the dual for several state-action pairs at once

    terms -- array (K, M) of dual terms (see dual_terms)
    etas -- K radii

    Returns a list of K AmbiguityCost tuples.
    """
    z = np.atleast_2d(np.asarray(terms, dtype=float))
    size, m = z.shape
    etas = np.array([_nonneg('eta', e) for e in np.ravel(etas)])
    if etas.shape[0] != size:
        raise DimensionMismatch(what='radii', left=etas.shape[0], right=size)
    if not np.all(np.isfinite(z)):
        raise NonFiniteValue(what='dual terms')
    lo, hi = mc.bracket
    log_lo, log_hi = log(lo), log(hi)

    def objective(t):
        return _dual_curve(z, np.exp(t), etas, cost_sigma)

    t, values, evals = golden_section_batch(objective, log_lo, log_hi,
                                            mc.iterations, size)
    ess_sup = np.max(z, axis=1)
    res = []
    for i in range(size):
        value = float(values[i])
        multiplier = float(np.exp(t[i]))
        boundary = None
        if t[i] == log_hi:
            multiplier = hi
            boundary = 'upper'
        elif t[i] == log_lo:
            multiplier = lo
            boundary = 'lower'
            if not cost_sigma and ess_sup[i] <= value:
                # alpha -> 0 limit of the dual
                value = float(ess_sup[i])
                multiplier = 0.0
        if boundary is not None and debug_active:
            DEBUG('dual minimum at %(boundary)s bracket edge'
                  ' (eta=%(eta)g, value=%(value)g)',
                  {'boundary': boundary, 'eta': etas[i], 'value': value})
        res.append(AmbiguityCost(value, multiplier, float(etas[i]), evals,
                                 m, boundary))
    return res


def cost_of_ambiguity(nominal, generative, cost_to_go, eta, mc,
                      cost_sigma=None):
    """
    Minimise the dual over the multiplier bracket: the cost of ambiguity

    For eta = 0, the minimum is approached at the upper bracket edge, where the
    dual tends to KL(nominal || generative) + E_nominal[cost_to_go]:

    >>> nominal = GaussianKernel([0., 0.], [1., 1.])
    >>> res = cost_of_ambiguity(nominal, nominal.inflated(2.0),
    ...                         constant_cost(0.0), 0.0, MCSettings(20000))
    >>> abs(res.c_tilde - 0.19315) < 2e-2, res.boundary
    (True, 'upper')
    """
    z = dual_terms(nominal, generative, cost_to_go, mc)
    return cost_of_ambiguity_batch(z[None, :], [eta], mc, cost_sigma)[0]
# ---------------------------------------------------- ] ... the dual ]


def free_energy_terms(p, q, expected_cost):
    """
    Free energy of a next-state kernel p against the generative kernel q:
    complexity KL(p || q) plus the expected cost

    >>> k = GaussianKernel([0.], [1.])
    >>> free_energy_terms(k, k, 1.5)
    FreeEnergy(complexity=0.0, expected_cost=1.5, total=1.5)
    """
    complexity = kl_gaussian(p, q)
    expected_cost = float(expected_cost)
    return FreeEnergy(complexity, expected_cost, complexity + expected_cost)


def ambiguity_free_value(nominal, generative, cost_to_go, mc):
    """
    Free energy of the nominal kernel itself (no adversary), with the
    expected cost estimated from the same samples the dual uses
    """
    samples = sample(nominal, mc.seed, mc.count)
    expected = float(np.mean(evaluate_cost(cost_to_go, samples)))
    return free_energy_terms(nominal, generative, expected)


if __name__ == '__main__':
    # Standard library:
    import doctest
    doctest.testmod()
