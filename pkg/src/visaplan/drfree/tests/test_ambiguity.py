# -*- coding: utf-8 -*- vim: ts=8 sts=4 sw=4 si et tw=79
"""
Tests for visaplan.drfree.ambiguity
"""
# Python compatibility:
from __future__ import absolute_import

# 3rd party:
import numpy as np
import pytest

# Local imports:
from visaplan.drfree.ambiguity import (
    AmbiguitySpec,
    MCSettings,
    ambiguity_free_value,
    augmented_kl_check,
    augmented_radius,
    constant_cost,
    cost_of_ambiguity,
    cost_of_ambiguity_batch,
    dual_terms,
    dual_value,
    eta_from_goal,
    eta_from_goal_batch,
    free_energy_terms,
    golden_section_batch,
    inflation_log_ratio,
    vectorized,
    )
from visaplan.drfree.exceptions import (
    DimensionMismatch,
    InvalidParameter,
    NonFiniteValue,
    )
from visaplan.drfree.gaussian import GaussianKernel, kl_gaussian, log_density
from visaplan.drfree.pmax import build_pmax, nominal_to_pmax_kl


@vectorized
def quadratic_cost(xs):
    return np.sum(xs * xs, axis=1)


def random_instance(rng, dim=2):
    nominal = GaussianKernel(rng.normal(size=dim),
                             rng.uniform(0.05, 0.5, size=dim))
    generative = build_pmax(nominal, float(rng.uniform(0.0, 1.0))).kernel
    return nominal, generative


def test_dual_is_midpoint_convex_with_common_random_numbers():
    rng = np.random.default_rng(77)
    for i in range(50):
        nominal, generative = random_instance(rng)
        mc = MCSettings(count=512, seed=i)
        eta = float(rng.uniform(0, 2))
        a, b = sorted(np.exp(rng.uniform(np.log(1e-2), np.log(1e2), size=2)))
        va = dual_value(a, nominal, generative, quadratic_cost, eta, mc)
        vb = dual_value(b, nominal, generative, quadratic_cost, eta, mc)
        vm = dual_value(0.5 * (a + b), nominal, generative, quadratic_cost,
                        eta, mc)
        avg = 0.5 * (va + vb)
        assert vm <= avg + 1e-9 * (1.0 + abs(avg))


def test_cost_of_ambiguity_is_monotone_in_the_radius():
    rng = np.random.default_rng(78)
    etas = [0.0, 0.01, 0.1, 0.5, 1.0, 3.0, 10.0]
    for i in range(50):
        nominal, generative = random_instance(rng)
        mc = MCSettings(count=256, seed=i)
        values = [cost_of_ambiguity(nominal, generative, quadratic_cost,
                                    eta, mc).c_tilde
                  for eta in etas]
        for lower, higher in zip(values, values[1:]):
            assert higher >= lower - 1e-9 * (1.0 + abs(lower))


def test_zero_radius_recovers_the_free_energy():
    nominal = GaussianKernel([0.5, 0.5], [0.1, 0.1])
    res = build_pmax(nominal, 0.5)
    mc = MCSettings(count=100000, seed=3)
    cost = cost_of_ambiguity(nominal, res.kernel, quadratic_cost, 0.0, mc)
    # E[|x|^2] = |mean|^2 + trace
    expected = nominal_to_pmax_kl(res.lam, 2) + 0.5 + 0.2
    assert cost.c_tilde == pytest.approx(expected, abs=2e-2)
    assert cost.boundary == 'upper'
    reference = ambiguity_free_value(nominal, res.kernel, quadratic_cost, mc)
    assert reference.complexity == pytest.approx(
        nominal_to_pmax_kl(res.lam, 2), abs=1e-12)
    assert cost.c_tilde == pytest.approx(reference.total, abs=2e-2)


def test_cost_of_ambiguity_exceeds_the_nominal_expectation():
    nominal = GaussianKernel([0.2, -0.1], [0.2, 0.3])
    mc = MCSettings(count=2000, seed=1)
    z = dual_terms(nominal, nominal, quadratic_cost, mc)
    cost = cost_of_ambiguity(nominal, nominal, quadratic_cost, 0.5, mc)
    assert np.mean(z) <= cost.c_tilde <= np.max(z) + 1e-12
    assert cost.multiplier > 0
    assert cost.mc_samples == 2000
    assert cost.eta_used == 0.5


def test_large_radius_ends_at_the_essential_supremum():
    nominal = GaussianKernel([0.], [1.])
    mc = MCSettings(count=100, seed=2)
    z = dual_terms(nominal, nominal, quadratic_cost, mc)
    cost = cost_of_ambiguity(nominal, nominal, quadratic_cost, 1e3, mc)
    assert cost.boundary == 'lower'
    assert cost.c_tilde <= np.max(z) + 1e-12
    assert cost.multiplier in (0.0, mc.bracket[0])


def test_batch_solver_matches_single_solves():
    rng = np.random.default_rng(79)
    mc = MCSettings(count=300, seed=4)
    terms = []
    etas = []
    singles = []
    for i in range(6):
        nominal, generative = random_instance(rng)
        eta = float(rng.uniform(0, 1))
        terms.append(dual_terms(nominal, generative, quadratic_cost, mc))
        etas.append(eta)
        singles.append(cost_of_ambiguity(nominal, generative,
                                         quadratic_cost, eta, mc))
    batch = cost_of_ambiguity_batch(np.vstack(terms), etas, mc)
    for one, many in zip(singles, batch):
        assert many.c_tilde == pytest.approx(one.c_tilde, rel=1e-12,
                                             abs=1e-12)
        assert many.boundary == one.boundary


def test_batch_solver_checks_its_input():
    mc = MCSettings(count=4)
    with pytest.raises(DimensionMismatch):
        cost_of_ambiguity_batch(np.zeros((2, 4)), [0.1], mc)
    with pytest.raises(NonFiniteValue):
        cost_of_ambiguity_batch(np.array([[0., np.inf, 0., 0.]]), [0.1], mc)
    with pytest.raises(InvalidParameter):
        cost_of_ambiguity_batch(np.zeros((1, 4)), [-0.1], mc)


def test_cost_channel_raises_the_dual():
    nominal = GaussianKernel([0.3], [0.2])
    mc = MCSettings(count=500, seed=5)
    plain = cost_of_ambiguity(nominal, nominal, quadratic_cost, 0.2, mc)
    with_cost = cost_of_ambiguity(nominal, nominal, quadratic_cost, 0.2, mc,
                                  cost_sigma=1.0)
    assert with_cost.c_tilde > plain.c_tilde


def test_dual_value_rejects_bad_multiplier():
    k = GaussianKernel([0.], [1.])
    with pytest.raises(InvalidParameter):
        dual_value(0.0, k, k, quadratic_cost, 0.1, MCSettings(8))


def test_non_finite_costs_are_reported():
    k = GaussianKernel([0.], [1.])

    def bad(x):
        return float('nan')
    with pytest.raises(NonFiniteValue):
        cost_of_ambiguity(k, k, bad, 0.1, MCSettings(8))


def test_unmarked_cost_functions_are_called_per_state():
    k = GaussianKernel([0., 0.], [1., 1.])
    mc = MCSettings(count=64, seed=9)

    def per_state(x):
        return float(np.dot(x, x))
    a = dual_terms(k, k, per_state, mc)
    b = dual_terms(k, k, quadratic_cost, mc)
    assert np.allclose(a, b, rtol=1e-12)


def test_inflation_log_ratio_matches_the_densities():
    rng = np.random.default_rng(6)
    nominal = GaussianKernel([0.3, -0.2, 1.0], [0.01, 0.2, 0.05])
    noise = rng.standard_normal((32, 3))
    xs = nominal.mean + noise * np.sqrt(nominal.variances)
    for lam in (1.5, 2.3577, 10.0):
        expected = (log_density(nominal, xs)
                    - log_density(nominal.inflated(lam), xs))
        assert np.allclose(inflation_log_ratio(noise, lam), expected,
                           rtol=1e-10, atol=1e-10)
    assert np.array_equal(inflation_log_ratio(noise, 1.0), np.zeros(32))


def test_shared_log_ratio_gives_the_dual_terms():
    nominal = GaussianKernel([0.1, 0.4], [0.02, 0.03])
    mc = MCSettings(count=16, seed=2)
    noise = np.random.default_rng(2).standard_normal((16, 2))
    xs = nominal.mean + noise * np.sqrt(nominal.variances)
    z = dual_terms(nominal, nominal.inflated(3.0), quadratic_cost, mc,
                   samples=xs)
    shared = inflation_log_ratio(noise, 3.0) + quadratic_cost(xs)
    assert np.allclose(z, shared, rtol=1e-10, atol=1e-10)



def test_golden_section_finds_interior_and_edge_minima():
    centres = np.array([-0.5, 0.1, 0.9, 3.0])
    x, y, evals = golden_section_batch(lambda t: (t - centres) ** 2,
                                       0.0, 1.0, 80, 4)
    assert np.allclose(x, [0.0, 0.1, 0.9, 1.0], atol=1e-8)
    assert evals == 84


def test_golden_section_prefers_the_upper_edge_of_flat_functions():
    x, y, evals = golden_section_batch(lambda t: np.zeros_like(t),
                                       -1.0, 2.0, 10, 3)
    assert np.array_equal(x, [2.0, 2.0, 2.0])


# ------------------------------------------------------- [ radii ... [
def test_augmented_radius():
    spec = AmbiguitySpec(eta_dyn=0.4, delta_cost=0.3, sigma_cost=0.5, rho=2)
    assert augmented_radius(spec) == pytest.approx(0.8 + 0.09 / 0.5)
    assert spec.cost_radius == pytest.approx(0.18)


@pytest.mark.parametrize('kwargs', [{'eta_dyn': -1}, {'rho': -0.5},
                                    {'delta_cost': float('nan')},
                                    {'sigma_cost': 0}])
def test_ambiguity_spec_rejects_invalid_values(kwargs):
    with pytest.raises(InvalidParameter):
        AmbiguitySpec(**kwargs)


def test_augmented_kl_never_exceeds_the_augmented_radius():
    rng = np.random.default_rng(80)
    violations = 0
    for i in range(10000):
        dim = int(rng.integers(1, 4))
        var = rng.uniform(0.05, 2.0, size=dim)
        nominal = GaussianKernel(rng.normal(size=dim), var)
        spec = AmbiguitySpec(eta_dyn=float(rng.uniform(0, 1)),
                             delta_cost=float(rng.uniform(0, 1)),
                             sigma_cost=float(rng.uniform(0.2, 2)),
                             rho=float(rng.uniform(0, 3)))
        # a true kernel within the dynamics ball: a shifted mean
        target = float(rng.uniform(0, 1)) * spec.effective_radius
        direction = rng.normal(size=dim)
        direction /= np.linalg.norm(direction)
        shift = np.sqrt(2 * target * var) * direction
        true_dyn = GaussianKernel(nominal.mean + shift, var)
        delta_c = float(rng.uniform(-1, 1)) * spec.delta_cost
        kl_aug, ok = augmented_kl_check(nominal, true_dyn, delta_c, spec)
        if not ok:
            violations += 1
    assert violations == 0


def test_augmented_kl_is_tight_in_the_corner():
    var = np.array([0.3, 0.7])
    nominal = GaussianKernel([0.1, 0.2], var)
    spec = AmbiguitySpec(eta_dyn=0.25, delta_cost=0.4, sigma_cost=0.8, rho=2)
    direction = np.array([0.6, 0.8])
    shift = np.sqrt(2 * spec.effective_radius * var) * direction
    true_dyn = GaussianKernel(nominal.mean + shift, var)
    kl_aug, ok = augmented_kl_check(nominal, true_dyn, spec.delta_cost, spec)
    assert ok
    assert abs(kl_aug - augmented_radius(spec)) <= 1e-12


def test_augmented_kl_detects_infeasible_kernels():
    nominal = GaussianKernel([0.], [1.])
    far = GaussianKernel([3.], [1.])
    kl_aug, ok = augmented_kl_check(nominal, far, 0.0,
                                    AmbiguitySpec(eta_dyn=1.0))
    assert kl_aug == pytest.approx(4.5)
    assert not ok


def test_eta_from_goal():
    goal = GaussianKernel([0.7, 0.7], 0.01)
    near = GaussianKernel([0.69, 0.7], 0.05)
    far = GaussianKernel([-0.7, -0.7], 0.05)
    assert eta_from_goal(goal, near, 1.0) < eta_from_goal(goal, far, 1.0)
    assert eta_from_goal(goal, far, 1.0) == pytest.approx(
        kl_gaussian(goal, far))
    assert eta_from_goal(goal, far, 0.0) == 0.0
    with pytest.raises(DimensionMismatch):
        eta_from_goal(goal, GaussianKernel([0.], [1.]), 1.0)


def test_eta_from_goal_batch_matches_single_kernels():
    rng = np.random.default_rng(4)
    means = rng.uniform(-1, 1, size=(5, 2))
    variances = np.array([0.05, 0.2])
    goals = [GaussianKernel([0.7, 0.7], 0.01),
             GaussianKernel([0.7, 0.7], [[0.02, 0.01], [0.01, 0.03]])]
    for goal in goals:
        etas = eta_from_goal_batch(goal, means, variances, 2.0)
        single = [eta_from_goal(goal, GaussianKernel(m, variances), 2.0)
                  for m in means]
        assert np.allclose(etas, single, rtol=1e-10, atol=1e-12)
    assert np.array_equal(eta_from_goal_batch(goals[0], means, variances,
                                              0.0), np.zeros(5))
    with pytest.raises(DimensionMismatch):
        eta_from_goal_batch(goals[0], means[:, :1], variances[:1], 1.0)
    with pytest.raises(InvalidParameter):
        eta_from_goal_batch(goals[0], means, variances, -1.0)

# ------------------------------------------------------- ] ... radii ]


def test_free_energy_terms():
    p = GaussianKernel([0.], [1.])
    q = GaussianKernel([0.], [2.])
    fe = free_energy_terms(p, q, 0.75)
    assert fe.complexity == pytest.approx(kl_gaussian(p, q))
    assert fe.total == pytest.approx(fe.complexity + 0.75)


def test_constant_cost_shape():
    assert constant_cost(1.5)(np.zeros((4, 3))).tolist() == [1.5] * 4
