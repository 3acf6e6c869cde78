# -*- coding: utf-8 -*- vim: ts=8 sts=4 sw=4 si et tw=79
"""\
Configuration: flat TOML files, defaults, value factories, option checks

A run is configured by a flat key-value file (the TOML subset without
tables); every key has a default in DEFAULTS and a normalising factory in
FACTORIES.  The resulting configuration is a plain dict.

>>> cfg = make_config(rho=2, seeds=[3, 4])
>>> cfg['rho'], cfg['seeds'], cfg['n_candidates']
(2.0, [3, 4], 64)

Unknown keys are rejected, naming the key:

>>> make_config(roh=2)
Traceback (most recent call last):
...
visaplan.drfree.exceptions.UnknownConfigKey: Unknown config key 'roh'
"""
# Python compatibility:
from __future__ import absolute_import

from six import string_types as six_string_types

# Standard library:
import hashlib
import json
import os

# Local imports:
from visaplan.drfree.exceptions import InvalidConfigValue, UnknownConfigKey

try:
    # Standard library:
    import tomllib
except ImportError:  # Python < 3.11
    # 3rd party:
    import tomli as tomllib

__all__ = [
    'DEFAULTS',
    'FACTORIES',
    'load_config',
    'make_config',
    'parse_config_text',
    'config_hash',
    'updated',
    'parse_perturbation',
    # small helpers:
    'makeBool',
    'check_kwargs',
    'workers_from_env',
    ]

# ---------------------------------------------- [ data ... [
LOWER_TRUE = frozenset('yes y true on 1'.split() + [True])
LOWER_FALSE = frozenset('no n false off 0'.split() + [False])
ENV_CHOICES = ('pointmass', 'pendulum')
SELECT_CHOICES = ('sample', 'argmax')
# ---------------------------------------------- ] ... data ]


# ----------------------------------------------- [ small helpers ... [
def makeBool(val, default=None):
    """
    Return a truth value for config and environment strings

    >>> makeBool('True')
    True
    >>> makeBool(' off ')
    False
    >>> makeBool('', 'yes')
    True
    >>> makeBool(None)
    False
    >>> makeBool('vielleicht')
    Traceback (most recent call last):
    ...
    ValueError: not a truth value: 'vielleicht'
    """
    if isinstance(val, bool):
        return val
    if val is None or (isinstance(val, six_string_types)
                       and not val.strip()):
        val = default or 'no'
    s = val.strip().lower() if isinstance(val, six_string_types) else val
    if s in LOWER_TRUE:
        return True
    if s in LOWER_FALSE:
        return False
    raise ValueError('not a truth value: %(val)r' % locals())


def check_kwargs(checked_kwargs, **my_kwargs):
    """
    Check for leftover keyword arguments and raise the expected TypeError

    >>> check_kwargs({})
    False
    >>> check_kwargs({'unknown': 42})
    Traceback (most recent call last):
    ...
    TypeError: Unknown option 'unknown' found!

    With a logger, unknown options are only reported:

    >>> from visaplan.drfree.mock import MockLogger
    >>> logger = MockLogger()
    >>> check_kwargs({'unknown': 42}, logger=logger)
    True
    >>> list(logger)
    [('WARN', "Unknown option 'unknown' found!")]
    """
    if not checked_kwargs:
        return False
    logger = my_kwargs.pop('logger', None)
    strict = my_kwargs.pop('strict', logger is None)
    if my_kwargs:
        check_kwargs(my_kwargs)
    res = False
    for key in sorted(checked_kwargs):
        if strict:
            raise TypeError('Unknown option %(key)r found!' % locals())
        res = True
        if logger is not None:
            logger.warning('Unknown option %(key)r found!', locals())
    return res


def updated(dic, **kwargs):
    """
    Return the given dict with modifications; a copy is made only if needed

    >>> dic = {'rho': 1.0}
    >>> updated(dic, rho=0.0)
    {'rho': 0.0}
    >>> dic
    {'rho': 1.0}
    >>> updated(dic) is dic
    True
    """
    if not kwargs:
        return dic
    res = dict(dic)
    res.update(kwargs)
    return res


def workers_from_env(environ=None):
    """
    Number of worker processes from DRFREE_WORKERS (default: 1, serial)

    >>> workers_from_env({})
    1
    >>> workers_from_env({'DRFREE_WORKERS': '4'})
    4
    >>> workers_from_env({'DRFREE_WORKERS': '0'})
    1
    """
    if environ is None:
        environ = os.environ
    val = environ.get('DRFREE_WORKERS', '').strip()
    if not val:
        return 1
    return max(int(val), 1)
# ----------------------------------------------- ] ... small helpers ]


# -------------------------------------------------- [ factories ... [
def _positive_int(key, val):
    if isinstance(val, bool) or int(val) != val or val < 1:
        raise InvalidConfigValue(key=key, value=val,
                                 reason='positive integer expected')
    return int(val)


def _nonneg_int(key, val):
    if isinstance(val, bool) or int(val) != val or val < 0:
        raise InvalidConfigValue(key=key, value=val,
                                 reason='non-negative integer expected')
    return int(val)


def _nonneg_float(key, val):
    if isinstance(val, bool):
        raise InvalidConfigValue(key=key, value=val, reason='number expected')
    val = float(val)
    if not val >= 0:
        raise InvalidConfigValue(key=key, value=val,
                                 reason='non-negative number expected')
    return val


def _positive_float(key, val):
    val = _nonneg_float(key, val)
    if not val > 0:
        raise InvalidConfigValue(key=key, value=val,
                                 reason='positive number expected')
    return val


def _fraction(key, val):
    val = _nonneg_float(key, val)
    if val >= 1:
        raise InvalidConfigValue(key=key, value=val,
                                 reason='fraction in [0, 1) expected')
    return val


def _choice(choices):
    def check(key, val):
        if val not in choices:
            raise InvalidConfigValue(key=key, value=val,
                                     reason='one of %s expected'
                                            % ', '.join(choices))
        return val
    return check


def _seeds(key, val):
    if isinstance(val, (int, float)) and not isinstance(val, bool):
        val = [val]
    if not val:
        raise InvalidConfigValue(key=key, value=val,
                                 reason='non-empty list of seeds expected')
    return [_nonneg_int(key, v) for v in val]


def _bracket(key, val):
    try:
        lo, hi = [float(v) for v in val]
    except (TypeError, ValueError):
        raise InvalidConfigValue(key=key, value=val,
                                 reason='pair of numbers expected')
    if not 0 < lo < hi:
        raise InvalidConfigValue(key=key, value=val,
                                 reason='0 < low < high expected')
    return [lo, hi]


def _action_box(key, val):
    if val is None:
        return None
    try:
        box = [[float(lo), float(hi)] for (lo, hi) in val]
    except (TypeError, ValueError):
        raise InvalidConfigValue(key=key, value=val,
                                 reason='list of [min, max] pairs expected')
    for lo, hi in box:
        if not lo < hi:
            raise InvalidConfigValue(key=key, value=val,
                                     reason='min < max expected')
    return box
# -------------------------------------------------- ] ... factories ]


# ------------------------------------------------- [ key table ... [
DEFAULTS = {
    # environment:
    'env': 'pointmass',
    'dt': 0.1,
    'max_steps': 1000,
    'process_noise': 0.01,
    'success_threshold': 0.05,
    'safe_distance': 0.07,
    'action_box': None,  # environment default
    # training loop:
    'episodes': 50,
    'seeds': [0],
    'warmup_episodes': 1,
    'train_reward_noise': 0.0,
    # controller:
    'horizon': 1,
    'n_candidates': 64,
    'select_mode': 'sample',
    'pmax_epsilon': 0.5,
    'rho': 1.0,
    'sigma_cost': 1.0,
    'delta_cost': 0.0,
    'mc_samples': 256,
    'alpha_bracket': [1e-3, 1e3],
    'golden_iterations': 60,
    'goal_sigma': 0.1,
    'cost_weight': 1.0,
    'goal_shaping': 0.0,
    'tree_candidates': 8,
    'tree_samples': 16,
    # models:
    'rbf_count': 64,
    'rbf_width': 0.5,
    'lr': 1e-2,
    'batch_size': 128,
    'buffer_capacity': 100000,
    'train_steps_per_episode': 50,
    'holdout_fraction': 0.1,
    # evaluation:
    'eval_rollouts': 20,
    'eval_friction': 1.0,
    'eval_drift': 0.0,
    'eval_reward_noise': 0.0,
    }

FACTORIES = {
    'env': _choice(ENV_CHOICES),
    'dt': _positive_float,
    'max_steps': _positive_int,
    'process_noise': _nonneg_float,
    'success_threshold': _positive_float,
    'safe_distance': _nonneg_float,
    'action_box': _action_box,
    'episodes': _positive_int,
    'seeds': _seeds,
    'warmup_episodes': _nonneg_int,
    'train_reward_noise': _nonneg_float,
    'horizon': _positive_int,
    'n_candidates': _positive_int,
    'select_mode': _choice(SELECT_CHOICES),
    'pmax_epsilon': _nonneg_float,
    'rho': _nonneg_float,
    'sigma_cost': _positive_float,
    'delta_cost': _nonneg_float,
    'mc_samples': _positive_int,
    'alpha_bracket': _bracket,
    'golden_iterations': _positive_int,
    'goal_sigma': _positive_float,
    'cost_weight': _nonneg_float,
    'goal_shaping': _nonneg_float,
    'tree_candidates': _positive_int,
    'tree_samples': _positive_int,
    'rbf_count': _nonneg_int,
    'rbf_width': _positive_float,
    'lr': _nonneg_float,
    'batch_size': _positive_int,
    'buffer_capacity': _positive_int,
    'train_steps_per_episode': _nonneg_int,
    'holdout_fraction': _fraction,
    'eval_rollouts': _nonneg_int,
    'eval_friction': _nonneg_float,
    'eval_drift': float,
    'eval_reward_noise': _nonneg_float,
    }
# ------------------------------------------------- ] ... key table ]


def _normalize(key, val):
    func = FACTORIES[key]
    if func is float:
        try:
            return float(val)
        except (TypeError, ValueError):
            raise InvalidConfigValue(key=key, value=val,
                                     reason='number expected')
    try:
        return func(key, val)
    except InvalidConfigValue:
        raise
    except (TypeError, ValueError) as e:
        raise InvalidConfigValue(key=key, value=val, reason=str(e))


def make_config(given=None, **overrides):
    """
    Complete the given values with the defaults, normalising every value

    >>> cfg = make_config({'episodes': 3}, rho=0)
    >>> cfg['episodes'], cfg['rho'], cfg['env']
    (3, 0.0, 'pointmass')
    >>> make_config(episodes=0)
    Traceback (most recent call last):
    ...
    visaplan.drfree.exceptions.InvalidConfigValue: Invalid value for config key 'episodes': 0 (positive integer expected)
    """
    raw = dict(given or {})
    raw.update(overrides)
    for key in sorted(raw):
        if key not in DEFAULTS:
            raise UnknownConfigKey(key=key)
    res = {}
    for key, default in DEFAULTS.items():
        res[key] = _normalize(key, raw.get(key, default))
    return res


def parse_config_text(text, source='<string>'):
    """
    Parse flat TOML text; tables are not part of our format

    >>> parse_config_text('rho = 0.5  # comment\\nseeds = [1, 2]')
    {'rho': 0.5, 'seeds': [1, 2]}
    >>> parse_config_text('[model]\\nlr = 1')
    Traceback (most recent call last):
    ...
    visaplan.drfree.exceptions.InvalidConfigValue: Invalid value for config key 'model': {'lr': 1} (nested tables are not supported)
    """
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as e:
        raise InvalidConfigValue(key=source, value='...', reason=str(e))
    for key, val in raw.items():
        if isinstance(val, dict):
            raise InvalidConfigValue(key=key, value=val,
                                     reason='nested tables are not supported')
    return raw


def load_config(path, **overrides):
    """
    Read a config file and return the complete, normalised config dict
    """
    with open(path, 'rb') as f:
        text = f.read().decode('utf-8')
    return make_config(parse_config_text(text, path), **overrides)


def config_hash(config):
    """
    A short, stable hash of a config dict

    >>> config_hash({'b': 1, 'a': [1.0, 2]}) == config_hash({'a': [1.0, 2], 'b': 1})
    True
    >>> len(config_hash(make_config()))
    12
    """
    canon = json.dumps(config, sort_keys=True, separators=(',', ':'))
    return hashlib.sha256(canon.encode('utf-8')).hexdigest()[:12]


def parse_perturbation(spec):
    """
    Parse a command line perturbation spec into config overrides

    >>> sorted(parse_perturbation('friction=0.8, drift=0.05').items())
    [('eval_drift', 0.05), ('eval_friction', 0.8)]
    >>> parse_perturbation('')
    {}
    >>> parse_perturbation('gravity=2')
    Traceback (most recent call last):
    ...
    visaplan.drfree.exceptions.UnknownConfigKey: Unknown config key 'gravity'
    """
    names = {'friction': 'eval_friction',
             'drift': 'eval_drift',
             'reward_noise': 'eval_reward_noise',
             }
    res = {}
    for chunk in (spec or '').split(','):
        chunk = chunk.strip()
        if not chunk:
            continue
        name, sep, val = chunk.partition('=')
        name = name.strip()
        if name not in names:
            raise UnknownConfigKey(key=name)
        key = names[name]
        res[key] = _normalize(key, val.strip())
    return res


if __name__ == '__main__':
    # Standard library:
    import doctest
    doctest.testmod()
