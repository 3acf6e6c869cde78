# -*- coding: utf-8 -*- vim: ts=8 sts=4 sw=4 si et tw=79
"""\
The robust policy: Gibbs weights over candidate actions

    pi(u | x)  ~  q(u) exp(-action_cost(u) - eta(x, u) - c_tilde(x, u))

Actions with a larger ambiguity radius or a larger cost of ambiguity get
less probability.

>>> cs = gibbs_policy(None, [[0.], [1.]], [(np.log(3), 0., 0.), (0., 0., 0.)])
>>> np.round(cs.probs, 12)
array([0.25, 0.75])
"""
# Python compatibility:
from __future__ import absolute_import

# Standard library:
from collections import namedtuple

# 3rd party:
import numpy as np
from scipy.special import logsumexp

# Local imports:
from visaplan.drfree.ambiguity import (
    MCSettings,
    constant_cost,
    cost_of_ambiguity_batch,
    eta_from_goal_batch,
    evaluate_cost,
    inflation_log_ratio,
    vectorized,
    )
from visaplan.drfree.config import check_kwargs
from visaplan.drfree.exceptions import (
    AllCandidatesFailed,
    DimensionMismatch,
    DrFreeError,
    EmptyCandidateSet,
    InvalidParameter,
    NonFiniteValue,
    )
from visaplan.drfree.gaussian import make_rng, wrap_periodic
from visaplan.drfree.pmax import solve_lambda

# Logging / Debugging:
from visaplan.drfree.log import getLogSupport

logger, debug_active, DEBUG = getLogSupport(fn=__file__)

__all__ = [
    'ActionCandidateSet',
    'StepDiagnostics',
    'DecisionContext',
    'gibbs_policy',
    'select_action',
    'greedy_step',
    'stage_value',
    'uniform_actions',
    ]

SELECT_MODES = ('sample', 'argmax')


class ActionCandidateSet(namedtuple('ActionCandidateSet',
                                    'actions logits probs')):
    """
    Candidate actions with their Gibbs logits and probabilities
    """
    __slots__ = ()

    def __len__(self):
        return len(self.probs)


StepDiagnostics = namedtuple('StepDiagnostics',
                             'candidates index eta c_tilde costs lam'
                             ' entropy_gain dropped')
StepDiagnostics.__doc__ = """\
Per-decision diagnostics of greedy_step

candidates -- the ActionCandidateSet (surviving candidates only)
index -- the selected candidate
eta, c_tilde -- arrays, per candidate
costs -- the AmbiguityCost tuples, per candidate
lam -- inflation factor of p_max
entropy_gain -- entropy of p_max minus entropy of the nominal kernel
dropped -- number of failed candidates
"""


def gibbs_policy(x, candidates, components, prior_logweights=None):
    """
    Gibbs distribution over candidate actions

    x -- the state (only used for logging)
    candidates -- sequence of action vectors
    components -- per action, a triple (eta, c_tilde, action_cost)
    prior_logweights -- log prior weights (default: uniform, i.e. zeros)

    Equal components give equal probabilities:

    >>> gibbs_policy(None, [[0.], [1.], [2.]], [(1., 2., 0.)] * 3).probs
    array([0.33333333, 0.33333333, 0.33333333])
    >>> gibbs_policy(None, [], [])
    Traceback (most recent call last):
    ...
    visaplan.drfree.exceptions.EmptyCandidateSet: No candidate actions given
    """
    actions = np.asarray(candidates, dtype=float)
    count = actions.shape[0] if actions.ndim else 0
    if not count:
        raise EmptyCandidateSet()
    comp = np.asarray(components, dtype=float).reshape(-1, 3)
    if comp.shape[0] != count:
        raise DimensionMismatch(what='policy components',
                                left=comp.shape[0], right=count)
    if prior_logweights is None:
        prior = np.zeros(count)
    else:
        prior = np.asarray(prior_logweights, dtype=float).reshape(-1)
        if prior.shape[0] != count:
            raise DimensionMismatch(what='prior log-weights',
                                    left=prior.shape[0], right=count)
    if not (np.all(np.isfinite(comp)) and np.all(np.isfinite(prior))):
        raise NonFiniteValue(what='policy components')
    eta, c_tilde, action_cost = comp[:, 0], comp[:, 1], comp[:, 2]
    logits = prior - action_cost - eta - c_tilde
    probs = np.exp(logits - logsumexp(logits))
    if debug_active:
        DEBUG('gibbs_policy at %(x)s: %(count)d candidates,'
              ' max prob %(pmax)g',
              {'x': x, 'count': count, 'pmax': float(np.max(probs))})
    return ActionCandidateSet(actions, logits, probs)


def select_action(candidate_set, rng, mode='sample'):
    """
    Index of the selected candidate: sampled from the Gibbs probabilities,
    or the most probable one (lowest index on ties)

    >>> cs = gibbs_policy(None, [[0.], [1.], [2.]],
    ...                   [(0., 1., 0.), (0., 0., 0.), (0., .5, 0.)])
    >>> select_action(cs, None, 'argmax')
    1
    """
    if mode == 'argmax':
        return int(np.argmax(candidate_set.logits))
    if mode != 'sample':
        raise InvalidParameter(name='select_mode', value=mode,
                               reason='one of %s expected'
                                      % ', '.join(SELECT_MODES))
    cum = np.cumsum(candidate_set.probs)
    idx = int(np.searchsorted(cum, rng.random() * cum[-1], side='right'))
    return min(idx, len(cum) - 1)


def uniform_actions(action_box, count, rng):
    """
    <count> actions drawn uniformly from the box; array (count, action_dim)
    """
    box = np.asarray(action_box, dtype=float).reshape(-1, 2)
    return rng.uniform(box[:, 0], box[:, 1], size=(int(count), box.shape[0]))


# ------------------------------------------- [ decision context ... [
class DecisionContext(namedtuple('DecisionContext',
                                 'model spec goal goal_indices epsilon mc'
                                 ' action_box cost_to_go action_cost'
                                 ' ambiguity tree_candidates tree_samples'
                                 ' periodic batch_cost')):
    """
    Everything a decision step needs besides the state and the seed

    cost_to_go -- a function of an action u returning the (vectorized)
                  cost-to-go function over next states
    action_cost -- a function of an (count, action_dim) array returning
                   the action costs, or None
    ambiguity -- False for the ambiguity-free controller (eta == 0)
    periodic -- indexes of angle coordinates of the state
    batch_cost -- a function of the (K, action_dim) actions and the
                  (K, M, state_dim) next states returning the (K, M) costs
                  to go, or None
    """
    __slots__ = ()


def _make_context(model, spec, goal, kwargs):
    pop = kwargs.pop
    action_box = pop('action_box', None)
    if action_box is None:
        action_box = [[-1.0, 1.0]] * model.action_dim
    mc = pop('mc', None) or MCSettings()
    cost_to_go = pop('cost_to_go', None)
    if cost_to_go is None:
        zero = constant_cost(0.0)

        def cost_to_go(u):
            return zero
    ctx = DecisionContext(
        model=model,
        spec=spec,
        goal=goal,
        goal_indices=pop('goal_indices', None),
        epsilon=float(pop('epsilon', 0.5)),
        mc=mc,
        action_box=action_box,
        cost_to_go=cost_to_go,
        action_cost=pop('action_cost', None),
        ambiguity=pop('ambiguity', True),
        tree_candidates=int(pop('tree_candidates', 8)),
        tree_samples=int(pop('tree_samples', 16)),
        periodic=tuple(pop('periodic', ())),
        batch_cost=pop('batch_cost', None),
        )
    return ctx


def _candidate_radii(ctx, means, variances):
    """
    Augmented radius eta per row of predicted means
    """
    count = means.shape[0]
    if not ctx.ambiguity:
        return np.zeros(count)
    spec = ctx.spec
    idx = ctx.goal_indices
    if idx is None:
        idx = list(range(means.shape[1]))
    idx = list(idx)
    marg_means = means[:, idx]
    if ctx.periodic:
        # angle coordinates: distance to the nearest copy of the goal
        local = [j for j, i in enumerate(idx) if i in ctx.periodic]
        marg_means = wrap_periodic(marg_means, local, center=ctx.goal.mean)
    eta_dyn = eta_from_goal_batch(ctx.goal, marg_means,
                                  np.asarray(variances)[idx], spec.rho)
    return eta_dyn + spec.cost_radius


def _evaluate_candidates(ctx, x, actions, lam, rng, mc, horizon=1):
    """
    Radii and costs of ambiguity for candidate actions at state x

    All candidates share the (diagonal) model variances, so the log ratio of
    the nominal and the inflated kernel at the Monte Carlo samples is the
    same for all of them.  With a batch_cost function in the context, the
    cost-to-go of all candidates is evaluated in one call (horizon 1 only).

    Returns (kept, eta, costs); kept are the indexes of the candidates which
    did not fail.
    """
    model = ctx.model
    spec = ctx.spec
    count = actions.shape[0]
    means, variances = model.predict_batch(x, actions)
    std = np.sqrt(variances)
    # common random numbers: one normal batch for all candidates and alphas
    noise = rng.standard_normal((mc.count, model.state_dim))
    sub_seeds = rng.integers(0, 2 ** 31, size=count)
    log_ratio = inflation_log_ratio(noise, lam)
    usable = (np.all(np.isfinite(means), axis=1)
              & bool(np.all(np.isfinite(variances))))
    etas = np.full(count, np.nan)
    if np.any(usable):
        etas[usable] = _candidate_radii(ctx, means[usable], variances)
    usable &= np.isfinite(etas)
    last = None
    if horizon == 1 and ctx.batch_cost is not None:
        samples = (means[:, np.newaxis, :]
                   + noise[np.newaxis, :, :] * std)
        vals = np.full((count, mc.count), np.nan)
        if np.any(usable):
            res = np.asarray(ctx.batch_cost(actions[usable],
                                            samples[usable]),
                             dtype=float)
            vals[usable] = res.reshape(-1, mc.count)
        usable &= np.all(np.isfinite(vals), axis=1)
        kept = [int(i) for i in np.flatnonzero(usable)]
        if len(kept) < count:
            last = NonFiniteValue(what='predicted next states or costs')
            logger.warning('%(failed)d of %(count)d candidates failed: %(e)s',
                           {'failed': count - len(kept), 'count': count,
                            'e': last})
        terms = [log_ratio + vals[i] for i in kept]
    else:
        kept = []
        terms = []
        for i in range(count):
            try:
                if not usable[i]:
                    raise NonFiniteValue(what='predicted next state')
                func = ctx.cost_to_go(actions[i])
                if horizon > 1:
                    func = _tree_cost_to_go(ctx, func, horizon - 1,
                                            int(sub_seeds[i]))
                samples = means[i] + noise * std
                z = log_ratio + evaluate_cost(func, samples)
            except DrFreeError as e:
                last = e
                logger.warning('candidate %(i)d failed: %(e)s', locals())
                continue
            kept.append(i)
            terms.append(z)
    if not kept:
        raise AllCandidatesFailed(count=count, last=last)
    etas = etas[kept]
    cost_sigma = None
    if ctx.ambiguity and spec.delta_cost > 0:
        cost_sigma = spec.sigma_cost
    costs = cost_of_ambiguity_batch(np.vstack(terms), etas, mc, cost_sigma)
    return kept, etas, costs



def _action_costs(ctx, actions):
    if ctx.action_cost is None:
        return np.zeros(actions.shape[0])
    return np.asarray(ctx.action_cost(actions), dtype=float).reshape(-1)
# ------------------------------------------- ] ... decision context ]


def greedy_step(x, model, spec, goal, n_candidates, rng_seed, **kwargs):
    """
    One decision of the robust controller

    Draws n_candidates uniform actions from the action box; for each, the
    model's nominal kernel is inflated to p_max, the radius eta comes from
    the goal distribution, and the cost of ambiguity from the dual.  An
    action is selected from the Gibbs distribution.

    x -- the current state
    model -- a NominalModel
    spec -- AmbiguitySpec; its rho, delta_cost and sigma_cost are used (the
            per-candidate eta_dyn is computed from the goal)
    goal -- GaussianKernel of the goal (over goal_indices)

    Keyword options:

    action_box -- per-dimension [min, max] (default: [-1, 1] each)
    epsilon -- p_max trust radius (default: 0.5)
    mc -- MCSettings for the dual
    cost_to_go -- function u -> vectorized cost-to-go over next states
    action_cost -- function of the actions array, or None
    goal_indices -- the state coordinates the goal refers to (default: all)
    periodic -- angle coordinates of the state (default: none)
    batch_cost -- cost-to-go of all candidates in one call, see
                  DecisionContext
    select_mode -- 'sample' (default) or 'argmax'
    ambiguity -- False for the ambiguity-free controller (default: True)
    horizon -- number of stages (default: 1, the greedy controller)
    tree_candidates, tree_samples -- scenario tree sizes for horizon > 1

    Returns (action, StepDiagnostics).
    """
    select_mode = kwargs.pop('select_mode', 'sample')
    horizon = int(kwargs.pop('horizon', 1))
    ctx = _make_context(model, spec, goal, kwargs)
    check_kwargs(kwargs)
    n_candidates = int(n_candidates)
    if n_candidates < 1:
        raise EmptyCandidateSet()
    if horizon < 1:
        raise InvalidParameter(name='horizon', value=horizon,
                               reason='positive integer expected')
    rng = make_rng(rng_seed)
    x = np.asarray(x, dtype=float).reshape(-1)
    actions = uniform_actions(ctx.action_box, n_candidates, rng)
    lam = solve_lambda(ctx.epsilon, model.state_dim)
    kept, etas, costs = _evaluate_candidates(ctx, x, actions, lam, rng,
                                             ctx.mc, horizon)
    actions = actions[kept]
    c_tilde = np.array([c.c_tilde for c in costs])
    components = np.column_stack([etas, c_tilde,
                                  _action_costs(ctx, actions)])
    cands = gibbs_policy(x, actions, components)
    index = select_action(cands, rng, select_mode)
    diag = StepDiagnostics(candidates=cands,
                           index=index,
                           eta=etas,
                           c_tilde=c_tilde,
                           costs=costs,
                           lam=lam,
                           entropy_gain=0.5 * model.state_dim * np.log(lam),
                           dropped=n_candidates - len(kept))
    return actions[index].copy(), diag


# ------------------------------------------- [ general horizon ... [
def stage_value(x, depth, ctx, rng):
    """
    Soft value of a state with <depth> remaining stages:

        c_hat(x) = -ln sum_u q(u) exp(-action_cost(u) - eta - c_tilde)

    with q uniform over tree_candidates sampled actions; for depth > 1 the
    cost-to-go inside the dual includes c_hat of the next stage, evaluated
    at tree_samples Monte Carlo samples (backward induction over the
    sampled scenario tree).
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    actions = uniform_actions(ctx.action_box, ctx.tree_candidates, rng)
    lam = solve_lambda(ctx.epsilon, ctx.model.state_dim)
    mc = ctx.mc._replace(count=ctx.tree_samples)
    kept, etas, costs = _evaluate_candidates(ctx, x, actions, lam, rng, mc,
                                             depth)
    actions = actions[kept]
    c_tilde = np.array([c.c_tilde for c in costs])
    logits = -_action_costs(ctx, actions) - etas - c_tilde
    return -(logsumexp(logits) - np.log(len(kept)))


def _tree_cost_to_go(ctx, func, depth, seed):
    """
    Cost-to-go of the next stage: the stage cost plus the soft value of the
    remaining <depth> stages
    """

    @vectorized
    def cost(xs):
        rng = make_rng(seed)
        stage = evaluate_cost(func, xs)
        rest = np.array([stage_value(xn, depth, ctx, rng) for xn in xs])
        return stage + rest
    return cost
# ------------------------------------------- ] ... general horizon ]
