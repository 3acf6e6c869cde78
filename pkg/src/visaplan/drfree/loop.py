# -*- coding: utf-8 -*- vim: ts=8 sts=4 sw=4 si et tw=79
"""\
The control loop: episodes of decision steps, data collection, model updates

Per seed, run_training

- starts with empty models and an empty replay buffer,
- runs the configured number of episodes; in each step the controller builds
  p_max from the nominal model, solves the dual per candidate action,
  samples an action from the Gibbs policy and executes it in the (training)
  environment; the transition goes to the buffer,
- updates both models between episodes.

Every seed owns independent random streams for the environment, the
controller and the model updates, derived from the seed alone; two runs
which differ only in rho thus see the same environment noise.

run_evaluation freezes trained models and runs rollouts in the evaluation
environment, which may be perturbed.
"""
# Python compatibility:
from __future__ import absolute_import

# Standard library:
from collections import namedtuple
from multiprocessing import Pool

# 3rd party:
import numpy as np
from scipy.stats import binom

# Local imports:
from visaplan.drfree.ambiguity import AmbiguitySpec, MCSettings, vectorized
from visaplan.drfree.config import (
    check_kwargs,
    config_hash,
    load_config,
    make_config,
    updated,
    workers_from_env,
    )
from visaplan.drfree.envs import PerturbationSpec, make_env
from visaplan.drfree.exceptions import DrFreeError, InvalidParameter
from visaplan.drfree.gaussian import GaussianKernel
from visaplan.drfree.models import (
    CostModel,
    NominalModel,
    ReplayBuffer,
    fit_models,
    make_transition,
    )
from visaplan.drfree.policy import greedy_step, uniform_actions

# Logging / Debugging:
from visaplan.drfree.log import getLogSupport
from visaplan.drfree.profile import StopWatch

logger, debug_active, DEBUG = getLogSupport(fn=__file__)

__all__ = [
    'RunConfig',
    'EpisodeRecord',
    'EPISODE_FIELDS',
    'TrainingResult',
    'EvaluationSummary',
    'Controller',
    'seed_streams',
    'new_models',
    'run_episode',
    'train_seed',
    'run_training',
    'run_evaluation',
    'summarize',
    'sign_test',
    'normalized_costs',
    'learning_curve',
    ]

# stream numbers of the per-seed random generators:
ENV_STREAM = 0
CONTROL_STREAM = 1
MODEL_STREAM = 2
DYN_FEATURES_STREAM = 3
COST_FEATURES_STREAM = 4
EVAL_STREAM_OFFSET = 100


class RunConfig(object):
    """
    A validated configuration with the objects derived from it

    >>> rc = RunConfig(make_config(rho=0.5, seeds=[1, 2]))
    >>> rc['rho'], rc.spec.rho, rc.env.name, len(rc.hash)
    (0.5, 0.5, 'pointmass', 12)
    """

    def __init__(self, config):
        self.config = config
        self.env = make_env(config)
        self.spec = AmbiguitySpec(delta_cost=config['delta_cost'],
                                  sigma_cost=config['sigma_cost'],
                                  rho=config['rho'])
        self.train_perturbation = PerturbationSpec.for_training(config)
        self.eval_perturbation = PerturbationSpec.for_evaluation(config)
        self.hash = config_hash(config)

    @classmethod
    def from_file(cls, path, **overrides):
        return cls(load_config(path, **overrides))

    def __getitem__(self, key):
        return self.config[key]

    def replaced(self, **kwargs):
        """
        A new RunConfig with some values changed
        """
        return RunConfig(make_config(updated(self.config, **kwargs)))

    @property
    def seeds(self):
        return self.config['seeds']

    def __repr__(self):
        return '<RunConfig %s>' % (self.hash,)


# ---------------------------------------------------- [ records ... [
EPISODE_FIELDS = ('seed', 'episode', 'phase', 'status', 'return',
                  'min_distance', 'success', 'steps', 'mean_c_tilde',
                  'mean_eta', 'min_clearance', 'safe', 'inner_solves',
                  'boundary_hits', 'error')


class EpisodeRecord(namedtuple('EpisodeRecord',
                               'seed episode phase status episode_return'
                               ' min_distance success steps mean_c_tilde'
                               ' mean_eta min_clearance safe inner_solves'
                               ' boundary_hits error')):
    """
    Metrics of one episode; return is the negative sum of stage costs
    """
    __slots__ = ()

    @property
    def cost(self):
        return -self.episode_return

    def as_row(self):
        row = self._asdict()
        row['return'] = row.pop('episode_return')
        return row

    @classmethod
    def failed(cls, seed, episode, phase, error):
        return cls(seed, episode, phase, 'failed', None, None, False, 0,
                   None, None, None, False, 0, 0,
                   '%s: %s' % (error.__class__.__name__, error))


class TrainingResult(list):
    """
    The EpisodeRecords of all seeds, plus

    models -- dict seed -> (NominalModel, CostModel)
    buffers -- dict seed -> dict(size=..., total_added=..., sources=...)
    config -- the RunConfig
    """

    def __init__(self, records=(), models=None, buffers=None, config=None):
        list.__init__(self, records)
        self.models = models or {}
        self.buffers = buffers or {}
        self.config = config

    def for_seed(self, seed):
        return [rec for rec in self if rec.seed == seed]


EvaluationSummary = namedtuple('EvaluationSummary',
                               'rho n_rollouts success_rate'
                               ' safe_success_rate mean_cost std_cost'
                               ' mean_min_distance records')
# ---------------------------------------------------- ] ... records ]


def seed_streams(seed):
    """
    The independent random generators of one seed

    >>> streams = seed_streams(3)
    >>> sorted(streams)
    ['control', 'env', 'model']
    >>> streams['env'].random() == seed_streams(3)['env'].random()
    True
    """
    return {'env': np.random.default_rng([seed, ENV_STREAM]),
            'control': np.random.default_rng([seed, CONTROL_STREAM]),
            'model': np.random.default_rng([seed, MODEL_STREAM]),
            }


def new_models(rc, seed):
    """
    Untrained dynamics and cost models for one seed
    """
    env = rc.env
    cfg = rc.config
    spec = env.spec
    nominal = NominalModel(spec.state_dim, spec.action_dim,
                           spec.state_box, spec.action_box,
                           rbf_count=cfg['rbf_count'],
                           rbf_width=cfg['rbf_width'],
                           rng_seed=[seed, DYN_FEATURES_STREAM],
                           periodic=spec.periodic)
    cost_model = CostModel(spec.state_dim, spec.action_dim,
                           spec.state_box, spec.action_box,
                           rbf_count=cfg['rbf_count'],
                           rbf_width=cfg['rbf_width'],
                           rng_seed=[seed, COST_FEATURES_STREAM])
    return nominal, cost_model


class Controller(object):
    """
    The greedy robust controller for one pair of (frozen) models
    """

    def __init__(self, nominal, cost_model, rc, rho=None):
        self.nominal = nominal
        self.cost_model = cost_model
        self.rc = rc
        self.env = env = rc.env
        cfg = rc.config
        spec = rc.spec
        if rho is not None:
            spec = AmbiguitySpec(delta_cost=spec.delta_cost,
                                 sigma_cost=spec.sigma_cost, rho=rho)
        self.spec = spec
        idx = list(env.spec.goal_indices)
        self.goal = GaussianKernel(np.asarray(env.spec.goal)[idx],
                                   cfg['goal_sigma'])
        mc = MCSettings.from_config(cfg)
        if cfg['horizon'] > 1:
            mc = MCSettings(count=cfg['tree_samples'], seed=mc.seed,
                            bracket=mc.bracket, iterations=mc.iterations)
        self.options = {
            'action_box': env.spec.action_box,
            'epsilon': cfg['pmax_epsilon'],
            'mc': mc,
            'cost_to_go': self.cost_to_go,
            'goal_indices': idx,
            'periodic': env.spec.periodic,
            'batch_cost': self.batch_cost,
            'select_mode': cfg['select_mode'],
            'horizon': cfg['horizon'],
            'tree_candidates': cfg['tree_candidates'],
            'tree_samples': cfg['tree_samples'],
            }
        self.n_candidates = cfg['n_candidates']

    def cost_to_go(self, u):
        """
        The learned stage cost of the state reached by u, plus the optional
        goal distance shaping
        """
        stage = self._stage_cost

        @vectorized
        def cost(xs):
            return stage(xs, u)
        return cost

    def batch_cost(self, actions, states):
        """
        cost_to_go for K candidate actions at once: states has the shape
        (K, M, state_dim), the result (K, M)
        """
        count, samples, dim = states.shape
        flat = states.reshape(count * samples, dim)
        u_rep = np.repeat(actions, samples, axis=0)
        return self._stage_cost(flat, u_rep).reshape(count, samples)

    def _stage_cost(self, xs, u):
        xs = self.env.canonical_states(xs)
        res = self.rc['cost_weight'] * self.cost_model.predict_costs(xs, u)
        shaping = self.rc['goal_shaping']
        if shaping:
            dist = self.env.goal_distance(xs)
            res = res + shaping * dist * dist
        return res

    def act(self, x, rng):
        return greedy_step(x, self.nominal, self.spec, self.goal,
                           self.n_candidates, rng, **self.options)


def run_episode(env, controller, perturbation, rng_env, rng_ctl, **kwargs):
    """
    Run one episode; return (EpisodeRecord, trajectory)

    Keyword options:

    seed, episode, phase -- for the record
    warmup -- uniform random actions instead of the controller
    buffer -- if given, every transition is appended
    source -- provenance tag of the transitions (default: 'train')
    keep_trajectory -- return (states, actions, costs) lists, else None
    safe_distance -- minimal obstacle clearance of a safe episode
    """
    pop = kwargs.pop
    seed = pop('seed', None)
    episode = pop('episode', None)
    phase = pop('phase', 'train')
    warmup = pop('warmup', False)
    buffer = pop('buffer', None)
    source = pop('source', 'train')
    keep = pop('keep_trajectory', False)
    safe_distance = pop('safe_distance', 0.0)
    check_kwargs(kwargs)
    threshold = env.success_threshold
    x = env.reset()
    total = 0.0
    min_distance = float(env.goal_distance(x)[0])
    min_clearance = float(env.clearance(x)[0])
    c_tildes = []
    etas = []
    inner = 0
    boundary_hits = 0
    steps = 0
    states, actions, costs = [], [], []
    for _ in range(env.spec.max_steps):
        if warmup:
            u = uniform_actions(env.spec.action_box, 1, rng_ctl)[0]
        else:
            u, diag = controller.act(x, rng_ctl)
            c_tildes.append(float(np.mean(diag.c_tilde)))
            etas.append(float(np.mean(diag.eta)))
            inner += len(diag.costs)
            boundary_hits += sum(1 for c in diag.costs
                                 if c.boundary == 'lower')
        x_next, cost, done = env.step(x, u, perturbation, rng_env)
        if buffer is not None:
            buffer.append(make_transition(x, u, x_next, cost, source))
        steps += 1
        total += cost
        min_distance = min(min_distance, float(env.goal_distance(x_next)[0]))
        min_clearance = min(min_clearance, float(env.clearance(x_next)[0]))
        if keep:
            states.append(x_next)
            actions.append(u)
            costs.append(cost)
        x = x_next
        if done:
            break
    if np.isinf(min_clearance):
        min_clearance = None
        safe = True
    else:
        safe = min_clearance >= safe_distance
    record = EpisodeRecord(
        seed=seed,
        episode=episode,
        phase=phase,
        status='ok',
        episode_return=-total,
        min_distance=min_distance,
        success=min_distance < threshold,
        steps=steps,
        mean_c_tilde=float(np.mean(c_tildes)) if c_tildes else None,
        mean_eta=float(np.mean(etas)) if etas else None,
        min_clearance=min_clearance,
        safe=safe,
        inner_solves=inner,
        boundary_hits=boundary_hits,
        error='')
    return record, ((states, actions, costs) if keep else None)


def train_seed(rc, seed, trajectories=None):
    """
    Run all training episodes for one seed

    Returns (records, (nominal, cost_model), buffer_info, trajectories);
    trajectories is a list of (episode, (states, actions, costs)) if
    requested.
    """
    cfg = rc.config
    env = rc.env
    streams = seed_streams(seed)
    nominal, cost_model = new_models(rc, seed)
    buffer = ReplayBuffer(cfg['buffer_capacity'])
    records = []
    kept = []
    for episode in range(1, cfg['episodes'] + 1):
        warmup = episode <= cfg['warmup_episodes']
        phase = 'warmup' if warmup else 'train'
        controller = None if warmup else Controller(nominal, cost_model, rc)
        try:
            with StopWatch('seed %d, episode %d' % (seed, episode),
                           enable=debug_active, logger=logger,
                           method='debug'):
                record, traj = run_episode(
                    env, controller, rc.train_perturbation,
                    streams['env'], streams['control'],
                    seed=seed, episode=episode, phase=phase, warmup=warmup,
                    buffer=buffer, source='train',
                    safe_distance=cfg['safe_distance'],
                    keep_trajectory=bool(trajectories))
        except DrFreeError as e:
            logger.error('seed %(seed)d, episode %(episode)d failed: %(e)s',
                         locals())
            records.append(EpisodeRecord.failed(seed, episode, phase, e))
            break
        records.append(record)
        if traj is not None:
            kept.append((episode, traj))
        logger.info('seed %(seed)d, episode %(episode)d (%(phase)s):'
                    ' return %(ret).4f, min distance %(dist).4f,'
                    ' %(steps)d steps',
                    {'seed': seed, 'episode': episode, 'phase': phase,
                     'ret': record.episode_return,
                     'dist': record.min_distance, 'steps': record.steps})
        try:
            fit_models(nominal, cost_model, buffer, cfg, streams['model'])
        except DrFreeError as e:
            logger.error('seed %(seed)d: model update after episode'
                         ' %(episode)d failed: %(e)s', locals())
            records.append(EpisodeRecord.failed(seed, episode, 'update', e))
            break
    info = {'size': len(buffer),
            'total_added': buffer.total_added,
            'sources': dict(buffer.sources()),
            }
    return records, (nominal, cost_model), info, kept


def _train_seed_worker(args):
    config, seed, trajectories = args
    return train_seed(RunConfig(config), seed, trajectories)


def _map(func, args_list, workers):
    if workers > 1 and len(args_list) > 1:
        pool = Pool(min(workers, len(args_list)))
        try:
            return pool.map(func, args_list)
        finally:
            pool.close()
            pool.join()
    return [func(args) for args in args_list]


def run_training(config, workers=None, trajectories=False):
    """
    Train for all configured seeds; returns a TrainingResult

    config -- a RunConfig or a config dict
    workers -- number of worker processes (default: from DRFREE_WORKERS)
    trajectories -- keep the trajectories (in result.trajectories)
    """
    rc = config if isinstance(config, RunConfig) else RunConfig(config)
    if workers is None:
        workers = workers_from_env()
    results = _map(_train_seed_worker,
                   [(rc.config, seed, trajectories) for seed in rc.seeds],
                   workers)
    res = TrainingResult(config=rc)
    res.trajectories = {}
    for seed, (records, models, info, kept) in zip(rc.seeds, results):
        res.extend(records)
        res.models[seed] = models
        res.buffers[seed] = info
        res.trajectories[seed] = kept
    return res


def _evaluate_seed_worker(args):
    config, seed, models, rollouts, rho, trajectories = args
    rc = RunConfig(config)
    nominal, cost_model = models
    controller = Controller(nominal, cost_model, rc, rho=rho)
    records = []
    kept = []
    for r in range(rollouts):
        rng_env = np.random.default_rng([seed, EVAL_STREAM_OFFSET + r,
                                         ENV_STREAM])
        rng_ctl = np.random.default_rng([seed, EVAL_STREAM_OFFSET + r,
                                         CONTROL_STREAM])
        try:
            record, traj = run_episode(
                rc.env, controller, rc.eval_perturbation, rng_env, rng_ctl,
                seed=seed, episode=r + 1, phase='eval',
                safe_distance=rc['safe_distance'],
                keep_trajectory=trajectories)
        except DrFreeError as e:
            logger.error('seed %(seed)d, evaluation rollout %(r)d failed:'
                         ' %(e)s', locals())
            records.append(EpisodeRecord.failed(seed, r + 1, 'eval', e))
            continue
        records.append(record)
        if traj is not None:
            kept.append((r + 1, traj))
    return records, kept


def run_evaluation(config, trained, n_rollouts=None, rho=None, workers=None,
                   trajectories=False):
    """
    Evaluate frozen models in the (perturbed) evaluation environment

    config -- a RunConfig or a config dict
    trained -- dict seed -> (NominalModel, CostModel), e.g.
               TrainingResult.models
    n_rollouts -- rollouts per trained seed (default: config eval_rollouts);
                  the summary covers len(trained) * n_rollouts rollouts
    rho -- execution-time rho (default: the configured one)

    Returns an EvaluationSummary; costs are episode costs (negative returns)
    of the successfully completed rollouts.
    """
    rc = config if isinstance(config, RunConfig) else RunConfig(config)
    if n_rollouts is None:
        n_rollouts = rc['eval_rollouts']
    n_rollouts = int(n_rollouts)
    if n_rollouts < 1:
        raise InvalidParameter(name='n_rollouts', value=n_rollouts,
                               reason='at least one rollout expected')
    if not trained:
        raise InvalidParameter(name='trained', value=trained,
                               reason='trained models expected')
    if rho is None:
        rho = rc['rho']
    if workers is None:
        workers = workers_from_env()
    seeds = sorted(trained)
    results = _map(_evaluate_seed_worker,
                   [(rc.config, seed, trained[seed], n_rollouts, rho,
                     trajectories)
                    for seed in seeds],
                   workers)
    records = []
    kept = {}
    for seed, (recs, trajs) in zip(seeds, results):
        records.extend(recs)
        kept[seed] = trajs
    summary = summarize(records, rho)
    logger.info('evaluation (rho=%(rho)g): %(n)d rollouts, success rate'
                ' %(success_rate).3f, mean cost %(mean_cost)s',
                {'rho': rho, 'n': summary.n_rollouts,
                 'success_rate': summary.success_rate,
                 'mean_cost': summary.mean_cost})
    if trajectories:
        return summary, kept
    return summary


def summarize(records, rho=None):
    """
    Aggregate evaluation records to an EvaluationSummary
    """
    ok = [rec for rec in records if rec.status == 'ok']
    count = len(records)
    costs = np.array([rec.cost for rec in ok])
    if count:
        success_rate = sum(1 for rec in ok if rec.success) / float(count)
        safe_rate = (sum(1 for rec in ok if rec.success and rec.safe)
                     / float(count))
    else:
        success_rate = safe_rate = 0.0
    if ok:
        mean_cost = float(np.mean(costs))
        std_cost = float(np.std(costs))
        mean_min_distance = float(np.mean([rec.min_distance for rec in ok]))
    else:
        mean_cost = std_cost = mean_min_distance = None
    return EvaluationSummary(rho, count, success_rate, safe_rate, mean_cost,
                             std_cost, mean_min_distance, records)


def sign_test(records, other_records):
    """
    One-sided paired sign test: does the first arm succeed more often than
    the other one?

    The records are paired by (seed, episode); failed records count as
    unsuccessful, and pairs with equal outcomes are left out.  Returns
    (wins, losses, p_value), with p_value = P(X >= wins) for
    X ~ Binomial(wins + losses, 1/2).

    >>> def rec(seed, success):
    ...     return EpisodeRecord(seed, 1, 'eval', 'ok', -1., 0., success, 1,
    ...                          None, None, None, True, 0, 0, '')
    >>> robust = [rec(s, True) for s in range(4)]
    >>> baseline = [rec(0, True)] + [rec(s, False) for s in (1, 2, 3)]
    >>> wins, losses, p_value = sign_test(robust, baseline)
    >>> wins, losses, round(p_value, 6)
    (3, 0, 0.125)
    >>> sign_test(baseline, robust)
    (0, 3, 1.0)
    """
    def outcomes(recs):
        return dict(((rec.seed, rec.episode),
                     bool(rec.status == 'ok' and rec.success))
                    for rec in recs)

    first = outcomes(records)
    second = outcomes(other_records)
    wins = losses = 0
    for key in sorted(set(first) & set(second)):
        if first[key] and not second[key]:
            wins += 1
        elif second[key] and not first[key]:
            losses += 1
    if not wins:
        return wins, losses, 1.0
    p_value = float(binom.sf(wins - 1, wins + losses, 0.5))
    return wins, losses, p_value



def normalized_costs(summaries, reference_rho=1.0):
    """
    Mean and std of the episode costs of several evaluation summaries,
    relative to the mean cost of the reference summary (rho == 1); without
    a reference, relative to the lowest mean cost

    Returns a list of (normalized_mean, normalized_std) pairs.

    >>> S = EvaluationSummary
    >>> s1 = S(1.0, 2, 1., 1., 4.0, 1.0, .01, [])
    >>> s2 = S(5.0, 2, 1., .5, 6.0, 2.0, .02, [])
    >>> normalized_costs([s2, s1])
    [(1.5, 0.5), (1.0, 0.25)]
    >>> normalized_costs([s2], reference_rho=1.0)
    [(1.0, 0.3333333333333333)]
    """
    ref = None
    for s in summaries:
        if s.rho == reference_rho and s.mean_cost is not None:
            ref = s.mean_cost
            break
    if ref is None:
        means = [s.mean_cost for s in summaries if s.mean_cost is not None]
        ref = min(means) if means else None
    res = []
    for s in summaries:
        if s.mean_cost is None or not ref:
            res.append((None, None))
        else:
            res.append((s.mean_cost / ref, s.std_cost / abs(ref)))
    return res


def learning_curve(results_by_arm):
    """
    Mean and std of the return per episode over seeds, per arm

    results_by_arm -- dict arm name -> TrainingResult (or list of records)

    Returns a list of dict rows (episode, arm, mean_return, std_return, n).
    Failed episodes are left out.
    """
    rows = []
    for arm in sorted(results_by_arm):
        by_episode = {}
        for rec in results_by_arm[arm]:
            if rec.status != 'ok':
                continue
            by_episode.setdefault(rec.episode, []).append(
                rec.episode_return)
        for episode in sorted(by_episode):
            vals = np.array(by_episode[episode])
            rows.append({'episode': episode,
                         'arm': arm,
                         'mean_return': float(np.mean(vals)),
                         'std_return': float(np.std(vals)),
                         'n': len(vals),
                         })
    return rows
