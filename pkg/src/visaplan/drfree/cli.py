# -*- coding: utf-8 -*- vim: ts=8 sts=4 sw=4 si et tw=79
"""\
The drfree command line tool

    drfree train <config> [-o <run-dir>] [--trajectories]
    drfree eval <run-dir> [--perturb friction=0.8,drift=0.05] [--rho 0]
    drfree sweep <sweep-file> [-o <dir>] [--retrain]
    drfree compare <config> [-o <dir>]

Every output file carries the config hash and the seeds; metric files
contain nothing which would differ between two runs of the same config.

A sweep file is flat TOML as well:

    config = "pointmass.toml"   # relative to the sweep file
    parameter = "rho"
    values = [0, 0.5, 1, 5, 100, 1000, 2000]
    trials = 5
    rollouts = 1                # evaluation rollouts per trial (seed)
    retrain = false

Errors of the package end the program with exit code 2 and one line on
stderr, e.g.:

    drfree: error: UnknownConfigKey: Unknown config key 'roh'
"""
# Python compatibility:
from __future__ import absolute_import, print_function

# Standard library:
import argparse
import json
import os
import sys
from collections import namedtuple
from os.path import abspath, dirname, isabs, isdir
from os.path import join as path_join
from os.path import splitext

# Local imports:
from visaplan.drfree.config import (
    DEFAULTS,
    make_config,
    makeBool,
    parse_config_text,
    parse_perturbation,
    )
from visaplan.drfree.csvfiles import format_value, write_csv
from visaplan.drfree.envs import write_trajectory
from visaplan.drfree.exceptions import (
    CheckpointError,
    DrFreeError,
    InvalidConfigValue,
    UnknownConfigKey,
    )
from visaplan.drfree.loop import (
    EPISODE_FIELDS,
    RunConfig,
    learning_curve,
    normalized_costs,
    run_evaluation,
    run_training,
    sign_test,
    )
from visaplan.drfree.models import load_checkpoint, save_checkpoint

# Logging / Debugging:
from visaplan.drfree.log import getLogSupport, setup_logging

logger, debug_active, DEBUG = getLogSupport(fn=__file__)

__all__ = [
    'main',
    'SweepSpec',
    'load_sweep',
    'cmd_train',
    'cmd_eval',
    'cmd_sweep',
    'cmd_compare',
    'format_table',
    ]

RETURN_CONVENTION = 'return = -(sum of stage costs)'
SWEEP_FIELDS = ['rho', 'normalized_cost', 'std', 'success_rate']
CURVE_FIELDS = ['episode', 'arm', 'mean_return', 'std_return', 'n']
EVAL_FIELDS = EPISODE_FIELDS


# ------------------------------------------------ [ output helpers ... [
def header_lines(rc, *more):
    """
    The comment lines of every CSV file

    >>> rc = RunConfig(make_config(seeds=[1, 2]))
    >>> header_lines(rc)[1:]
    ['seeds: 1 2', 'return = -(sum of stage costs)']
    """
    res = ['config hash: %s' % (rc.hash,),
           'seeds: %s' % ' '.join(str(s) for s in rc.seeds),
           RETURN_CONVENTION,
           ]
    res.extend(more)
    return res


def write_json(path, data):
    with open(path, 'w') as f:
        json.dump(data, f, sort_keys=True, indent=1)
        f.write('\n')


def read_json(path):
    with open(path) as f:
        return json.load(f)


def ensure_dir(path):
    if not isdir(path):
        os.makedirs(path)
    return path


def default_output(path, suffix=None):
    """
    <path> without the extension, plus an optional suffix

    >>> default_output('configs/pointmass.toml', 'sweep')
    'configs/pointmass-sweep'
    """
    stem = splitext(path)[0]
    if suffix:
        return '%s-%s' % (stem, suffix)
    return stem


def format_table(fieldnames, rows):
    """
    An aligned plain text table

    >>> print(format_table(['rho', 'std'], [{'rho': 1.0, 'std': 0.25}]))
    rho std
      1 0.25
    """
    cells = [list(fieldnames)]
    for row in rows:
        cells.append([format_value(row[key]) for key in fieldnames])
    widths = [max(len(line[i]) for line in cells)
              for i in range(len(fieldnames))]
    lines = []
    for num, line in enumerate(cells):
        if num:
            items = [val.rjust(w) for (val, w) in zip(line, widths)]
        else:
            items = [val.ljust(w) for (val, w) in zip(line, widths)]
        lines.append(' '.join(items).rstrip())
    return '\n'.join(lines)


def summary_dict(summary):
    """
    An EvaluationSummary without its records, for json files
    """
    res = summary._asdict()
    del res['records']
    return res


def _write_trajectories(directory, env, trajectories, tag):
    ensure_dir(directory)
    for seed in sorted(trajectories):
        for episode, (states, actions, costs) in trajectories[seed]:
            fn = path_join(directory, '%s-seed-%d-episode-%d.csv'
                           % (tag, seed, episode))
            write_trajectory(fn, env, states, actions, costs)
# ------------------------------------------------ ] ... output helpers ]


# ----------------------------------------------------- [ commands ... [
def cmd_train(config_path, output=None, trajectories=False, **overrides):
    """
    Train for all configured seeds; write the run directory and return its
    path

    The run directory contains:

    config.json -- the complete configuration
    episodes.csv -- one row per episode and seed
    summary.json -- config hash, seeds, last-episode metrics, buffer sizes
    checkpoints/seed-<n>.json -- the trained models
    manifest.json -- how to reproduce the run
    """
    rc = RunConfig.from_file(config_path, **overrides)
    if output is None:
        output = default_output(config_path, 'run')
    ensure_dir(output)
    logger.info('training %(path)s (config %(hash)s), seeds %(seeds)s',
                {'path': config_path, 'hash': rc.hash, 'seeds': rc.seeds})
    result = run_training(rc, trajectories=trajectories)
    write_json(path_join(output, 'config.json'), rc.config)
    write_csv(path_join(output, 'episodes.csv'), EPISODE_FIELDS,
              [rec.as_row() for rec in result], header_lines(rc))
    ckpt_dir = ensure_dir(path_join(output, 'checkpoints'))
    files = ['config.json', 'episodes.csv', 'summary.json']
    for seed in rc.seeds:
        nominal, cost_model = result.models[seed]
        name = 'seed-%d.json' % seed
        save_checkpoint(path_join(ckpt_dir, name), nominal, cost_model,
                        meta={'seed': seed, 'config_hash': rc.hash})
        files.append('checkpoints/' + name)
    last = {}
    for seed in rc.seeds:
        records = result.for_seed(seed)
        if records:
            last[str(seed)] = records[-1].as_row()
    write_json(path_join(output, 'summary.json'),
               {'config_hash': rc.hash,
                'seeds': rc.seeds,
                'episodes': len(result),
                'failed': sum(1 for rec in result if rec.status != 'ok'),
                'last_episode': last,
                'buffers': dict((str(seed), info)
                                for (seed, info) in result.buffers.items()),
                })
    if trajectories:
        _write_trajectories(path_join(output, 'trajectories'), rc.env,
                            result.trajectories, 'train')
    write_json(path_join(output, 'manifest.json'),
               {'command': 'train',
                'config': abspath(config_path),
                'config_hash': rc.hash,
                'seeds': rc.seeds,
                'files': files,
                })
    return output


def load_run(run_dir, **overrides):
    """
    Read the config and the checkpoints of a run directory;
    return (RunConfig, dict seed -> (nominal, cost_model))
    """
    config = make_config(read_json(path_join(run_dir, 'config.json')),
                         **overrides)
    rc = RunConfig(config)
    trained = {}
    for seed in rc.seeds:
        fn = path_join(run_dir, 'checkpoints', 'seed-%d.json' % seed)
        if not os.path.exists(fn):
            raise CheckpointError(path=fn, reason='missing')
        nominal, cost_model, meta = load_checkpoint(fn)
        trained[seed] = (nominal, cost_model)
    return rc, trained


def cmd_eval(run_dir, perturb=None, rollouts=None, rho=None,
             trajectories=False):
    """
    Evaluate the checkpoints of a run directory; writes evaluation.csv and
    evaluation.json there and returns the EvaluationSummary
    """
    overrides = parse_perturbation(perturb)
    rc, trained = load_run(run_dir, **overrides)
    res = run_evaluation(rc, trained, n_rollouts=rollouts, rho=rho,
                         trajectories=trajectories)
    if trajectories:
        summary, kept = res
        _write_trajectories(path_join(run_dir, 'trajectories'), rc.env, kept,
                            'eval')
    else:
        summary = res
    comments = header_lines(rc, 'perturbation: %s' % (perturb or 'none',))
    write_csv(path_join(run_dir, 'evaluation.csv'), EVAL_FIELDS,
              [rec.as_row() for rec in summary.records], comments)
    data = summary_dict(summary)
    data.update({'config_hash': rc.hash,
                 'seeds': rc.seeds,
                 'perturbation': rc.eval_perturbation._asdict(),
                 })
    write_json(path_join(run_dir, 'evaluation.json'), data)
    return summary


class SweepSpec(namedtuple('SweepSpec',
                           'parameter values trials base_config retrain'
                           ' rollouts')):
    """
    A parameter sweep: values of one config key, trials per value
    """
    __slots__ = ()

    def __new__(cls, parameter='rho', values=(), trials=1, base_config=None,
                retrain=False, rollouts=1):
        if parameter not in DEFAULTS or parameter == 'seeds':
            raise UnknownConfigKey(key=parameter)
        values = list(values)
        if not values:
            raise InvalidConfigValue(key='values', value=values,
                                     reason='non-empty list expected')
        if isinstance(trials, bool) or int(trials) != trials or trials < 1:
            raise InvalidConfigValue(key='trials', value=trials,
                                     reason='positive integer expected')
        if (isinstance(rollouts, bool) or int(rollouts) != rollouts
                or rollouts < 1):
            raise InvalidConfigValue(key='rollouts', value=rollouts,
                                     reason='positive integer expected')
        if not base_config:
            raise InvalidConfigValue(key='config', value=base_config,
                                     reason='path of the base config'
                                            ' expected')
        return super(SweepSpec, cls).__new__(cls, parameter, values,
                                             int(trials), base_config,
                                             makeBool(retrain), int(rollouts))

    @property
    def execution_time(self):
        """
        True if one trained model serves all values
        """
        return self.parameter == 'rho' and not self.retrain


SWEEP_KEYS = {'config': 'base_config',
              'parameter': 'parameter',
              'values': 'values',
              'trials': 'trials',
              'retrain': 'retrain',
              'rollouts': 'rollouts',
              }


def load_sweep(path, **overrides):
    """
    Read a sweep file; the base config path is relative to it
    """
    with open(path, 'rb') as f:
        raw = parse_config_text(f.read().decode('utf-8'), path)
    raw.update(overrides)
    kwargs = {}
    for key in sorted(raw):
        if key not in SWEEP_KEYS:
            raise UnknownConfigKey(key=key)
        kwargs[SWEEP_KEYS[key]] = raw[key]
    base = kwargs.get('base_config')
    if base and not isabs(base):
        kwargs['base_config'] = path_join(dirname(path), base)
    return SweepSpec(**kwargs)


def sweep_rows(sweep, summaries):
    """
    The table rows of a sweep; costs are normalized to the rho == 1 row
    (for rho sweeps), else to the lowest mean cost
    """
    reference = 1.0 if sweep.parameter == 'rho' else None
    keyed = [s._replace(rho=v) for (v, s) in zip(sweep.values, summaries)]
    normalized = normalized_costs(keyed, reference)
    rows = []
    for value, summary, (norm, std) in zip(sweep.values, summaries,
                                           normalized):
        rows.append({sweep.parameter: value,
                     'normalized_cost': norm,
                     'std': std,
                     'success_rate': summary.safe_success_rate,
                     })
    return rows


def cmd_sweep(sweep_path, output=None, retrain=None):
    """
    Run a sweep; write sweep.csv, sweep.txt and manifest.json to the output
    directory and return the table rows

    For a rho sweep (and without retrain), one set of trained models is
    evaluated with every rho value at execution time; otherwise every value
    is trained separately.  The trials are the seeds; a trial succeeds if
    the goal is reached and the obstacle clearance never drops below
    safe_distance.
    """
    overrides = {}
    if retrain is not None:
        overrides['retrain'] = retrain
    sweep = load_sweep(sweep_path, **overrides)
    base = RunConfig.from_file(sweep.base_config)
    first = base.seeds[0]
    seeds = [first + i for i in range(sweep.trials)]
    base = base.replaced(seeds=seeds)
    if output is None:
        output = default_output(sweep_path, 'results')
    ensure_dir(output)
    summaries = []
    if sweep.execution_time:
        logger.info('sweep over rho: training once (config %(hash)s)',
                    {'hash': base.hash})
        trained = run_training(base).models
        for value in sweep.values:
            summaries.append(run_evaluation(base, trained,
                                            n_rollouts=sweep.rollouts,
                                            rho=value))
    else:
        for value in sweep.values:
            rc = base.replaced(**{sweep.parameter: value})
            logger.info('sweep: %(name)s = %(value)s (config %(hash)s)',
                        {'name': sweep.parameter, 'value': value,
                         'hash': rc.hash})
            trained = run_training(rc).models
            summaries.append(run_evaluation(rc, trained,
                                            n_rollouts=sweep.rollouts))
    rows = sweep_rows(sweep, summaries)
    fieldnames = [sweep.parameter] + SWEEP_FIELDS[1:]
    comments = header_lines(
        base,
        'sweep over %s, %d trial(s), %d rollout(s) per trial, %s'
        % (sweep.parameter, sweep.trials, sweep.rollouts,
           'execution-time values' if sweep.execution_time
           else 'retrained per value'))
    write_csv(path_join(output, 'sweep.csv'), fieldnames, rows, comments)
    table = format_table(fieldnames, rows)
    with open(path_join(output, 'sweep.txt'), 'w') as f:
        for line in comments:
            f.write('# %s\n' % (line,))
        f.write(table + '\n')
    write_json(path_join(output, 'manifest.json'),
               {'command': 'sweep',
                'sweep': abspath(sweep_path),
                'config': abspath(sweep.base_config),
                'config_hash': base.hash,
                'seeds': seeds,
                'parameter': sweep.parameter,
                'values': sweep.values,
                'retrain': sweep.retrain,
                'files': ['sweep.csv', 'sweep.txt'],
                })
    print(table)
    return rows


def cmd_compare(config_path, output=None, **overrides):
    """
    Train and evaluate the robust controller (rho = 1) and the
    ambiguity-free baseline (rho = 0) over the configured seeds; both arms
    share the per-seed random streams.

    Writes learning_curve.csv (mean and std of the return per episode and
    arm) and comparison.json (evaluation summaries, success counts and a
    one-sided sign test of the robust against the baseline successes,
    paired by seed and rollout); returns a dict arm -> EvaluationSummary.
    """
    base = RunConfig.from_file(config_path, **overrides)
    if output is None:
        output = default_output(config_path, 'compare')
    ensure_dir(output)
    arms = {'robust': 1.0, 'baseline': 0.0}
    results = {}
    summaries = {}
    for arm in sorted(arms):
        rc = base.replaced(rho=arms[arm])
        logger.info('compare: %(arm)s arm (rho=%(rho)g, config %(hash)s)',
                    {'arm': arm, 'rho': arms[arm], 'hash': rc.hash})
        results[arm] = result = run_training(rc)
        summaries[arm] = run_evaluation(rc, result.models)
    write_csv(path_join(output, 'learning_curve.csv'), CURVE_FIELDS,
              learning_curve(results), header_lines(base))
    data = {'config_hash': base.hash,
            'seeds': base.seeds,
            'arms': {},
            }
    for arm in sorted(arms):
        summary = summaries[arm]
        entry = summary_dict(summary)
        entry['successes'] = int(round(summary.success_rate
                                       * summary.n_rollouts))
        entry['safe_successes'] = int(round(summary.safe_success_rate
                                            * summary.n_rollouts))
        data['arms'][arm] = entry
    wins, losses, p_value = sign_test(summaries['robust'].records,
                                      summaries['baseline'].records)
    data['sign_test'] = {'wins': wins,
                         'losses': losses,
                         'p_value': p_value,
                         }
    write_json(path_join(output, 'comparison.json'), data)
    write_json(path_join(output, 'manifest.json'),
               {'command': 'compare',
                'config': abspath(config_path),
                'config_hash': base.hash,
                'seeds': base.seeds,
                'files': ['learning_curve.csv', 'comparison.json'],
                })
    rows = [{'arm': arm,
             'success_rate': summaries[arm].success_rate,
             'safe_success_rate': summaries[arm].safe_success_rate,
             'mean_cost': summaries[arm].mean_cost,
             } for arm in sorted(arms)]
    print(format_table(['arm', 'success_rate', 'safe_success_rate',
                        'mean_cost'], rows))
    return summaries
# ----------------------------------------------------- ] ... commands ]


def make_parser():
    parser = argparse.ArgumentParser(
        prog='drfree',
        description='Distributionally robust free-energy control:'
                    ' training, evaluation and experiment sweeps')
    parser.add_argument('--log-level', default='INFO',
                        choices=['DEBUG', 'INFO', 'WARNING', 'ERROR'],
                        help='logging level (default: %(default)s)')
    sub = parser.add_subparsers(dest='command', metavar='command')
    sub.required = True

    p = sub.add_parser('train', help='train for all configured seeds')
    p.add_argument('config', help='flat TOML config file')
    p.add_argument('-o', '--output', help='run directory'
                   ' (default: the config file name without extension)')
    p.add_argument('--trajectories', action='store_true',
                   help='write one CSV file per training episode')

    p = sub.add_parser('eval', help='evaluate the models of a run directory')
    p.add_argument('run_dir')
    p.add_argument('--perturb', default='',
                   help='evaluation perturbation, e.g.'
                        ' "friction=0.8,drift=0.05,reward_noise=0"')
    p.add_argument('--rollouts', type=int,
                   help='rollouts per trained seed; the summary covers'
                        ' seeds x rollouts (default: eval_rollouts)')
    p.add_argument('--rho', type=float,
                   help='execution-time rho (default: as trained)')
    p.add_argument('--trajectories', action='store_true',
                   help='write one CSV file per rollout')

    p = sub.add_parser('sweep', help='run a parameter sweep')
    p.add_argument('sweep_file')
    p.add_argument('-o', '--output', help='output directory')
    p.add_argument('--retrain', action='store_true', default=None,
                   help='train separately for every value')

    p = sub.add_parser('compare', help='robust controller vs. baseline')
    p.add_argument('config')
    p.add_argument('-o', '--output', help='output directory')
    return parser


def main(argv=None):
    """
    Entry point of the drfree console script; returns the exit code
    """
    parser = make_parser()
    args = parser.parse_args(argv)
    setup_logging(args.log_level)
    try:
        if args.command == 'train':
            cmd_train(args.config, args.output, args.trajectories)
        elif args.command == 'eval':
            summary = cmd_eval(args.run_dir, args.perturb, args.rollouts,
                               args.rho, args.trajectories)
            print(format_table(['rho', 'n_rollouts', 'success_rate',
                                'safe_success_rate', 'mean_cost',
                                'std_cost'],
                               [summary_dict(summary)]))
        elif args.command == 'sweep':
            cmd_sweep(args.sweep_file, args.output, args.retrain)
        elif args.command == 'compare':
            cmd_compare(args.config, args.output)
    except DrFreeError as e:
        print('drfree: error: %s: %s' % (e.__class__.__name__, e),
              file=sys.stderr)
        return 2
    except (IOError, OSError) as e:
        print('drfree: error: %s: %s' % (e.__class__.__name__, e),
              file=sys.stderr)
        return 2
    return 0


if __name__ == '__main__':
    sys.exit(main())
