# -*- coding: utf-8 -*- vim: ts=8 sts=4 sw=4 si et tw=79
"""\
Learned models: nominal dynamics, stage cost, replay buffer, checkpoints

Both models are Gaussian regressors over a fixed feature basis (a bias, the
normalised inputs, and radial basis functions with centres drawn once from
the input box), with a state-independent diagonal variance:

    NominalModel:  x' ~ N(W phi(x, u), diag(exp(log_var)))
    CostModel:     c  ~ N(w phi(x', u), exp(log_var))

An untrained model predicts zero:

>>> model = NominalModel(2, 1, [[-1, 1], [-1, 1]], [[-1, 1]], rbf_count=4)
>>> model.predict([0.5, 0.5], [0.]).mean
array([0., 0.])
"""
# Python compatibility:
from __future__ import absolute_import

# Standard library:
import json
from collections import Counter, deque, namedtuple

# 3rd party:
import numpy as np

# Local imports:
from visaplan.drfree.batches import cycle_batches
from visaplan.drfree.exceptions import (
    CheckpointError,
    DimensionMismatch,
    InvalidParameter,
    NonFiniteGradient,
    NonFiniteValue,
    ProvenanceError,
    )
from visaplan.drfree.gaussian import (
    COV_FLOOR,
    LOG_2PI,
    GaussianKernel,
    make_rng,
    wrap_periodic,
    )

# Logging / Debugging:
from visaplan.drfree.log import getLogSupport
from visaplan.drfree.profile import profile

logger, debug_active, DEBUG = getLogSupport(fn=__file__)

__all__ = [
    # data:
    'Transition',
    'make_transition',
    'ReplayBuffer',
    # models:
    'FeatureMap',
    'GaussianRegressor',
    'NominalModel',
    'CostModel',
    'predict',
    'predict_cost',
    'train_step',
    'train_cost_step',
    'fit_models',
    'FitReport',
    # checkpoints:
    'CHECKPOINT_FORMAT',
    'CHECKPOINT_VERSION',
    'save_checkpoint',
    'load_checkpoint',
    ]

TRAIN = 'train'
CHECKPOINT_FORMAT = 'visaplan.drfree/model'
CHECKPOINT_VERSION = 1


# ------------------------------------------------- [ transitions ... [
Transition = namedtuple('Transition', 'x u x_next cost source')


def make_transition(x, u, x_next, cost, source=TRAIN):
    """
    Create a checked Transition; vectors become float arrays

    >>> t = make_transition([0, 1], [0.5], [0.1, 1], 2)
    >>> t.cost, t.source
    (2.0, 'train')
    >>> make_transition([0], [0], [0], float('nan'))
    Traceback (most recent call last):
    ...
    visaplan.drfree.exceptions.NonFiniteValue: Non-finite value in transition cost
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    u = np.asarray(u, dtype=float).reshape(-1)
    x_next = np.asarray(x_next, dtype=float).reshape(-1)
    if x.shape != x_next.shape:
        raise DimensionMismatch(what='transition states',
                                left=x.shape[0], right=x_next.shape[0])
    cost = float(cost)
    if not np.isfinite(cost):
        raise NonFiniteValue(what='transition cost')
    for arr in (x, u, x_next):
        if not np.all(np.isfinite(arr)):
            raise NonFiniteValue(what='transition vectors')
    return Transition(x, u, x_next, cost, source)


class ReplayBuffer(object):
    """
    FIFO ring of transitions

    >>> buf = ReplayBuffer(2)
    >>> for i in range(3):
    ...     buf.append(make_transition([i], [0], [i + 1], 0))
    >>> [float(t.x[0]) for t in buf], buf.total_added
    ([1.0, 2.0], 3)
    """

    def __init__(self, capacity):
        capacity = int(capacity)
        if capacity < 1:
            raise InvalidParameter(name='capacity', value=capacity,
                                   reason='positive integer expected')
        self.capacity = capacity
        self._items = deque(maxlen=capacity)
        self._dims = None
        self.total_added = 0

    def append(self, transition):
        dims = (transition.x.shape[0], transition.u.shape[0])
        if self._dims is None:
            self._dims = dims
        elif dims != self._dims:
            raise DimensionMismatch(what='buffered transition',
                                    left=dims, right=self._dims)
        self._items.append(transition)
        self.total_added += 1

    def extend(self, transitions):
        for t in transitions:
            self.append(t)

    def __len__(self):
        return len(self._items)

    def __iter__(self):
        return iter(self._items)

    def items(self):
        return list(self._items)

    def sources(self):
        return Counter(t.source for t in self._items)

    def split(self, fraction, rng):
        """
        Shuffle the buffered transitions and hold out a fraction of them

        Returns (train, holdout) lists.  With fewer than 2 transitions,
        nothing is held out.
        """
        items = self.items()
        count = len(items)
        held = int(fraction * count)
        if count < 2:
            held = 0
        perm = rng.permutation(count)
        holdout = [items[i] for i in perm[:held]]
        train = [items[i] for i in perm[held:]]
        return train, holdout
# ------------------------------------------------- ] ... transitions ]


# ---------------------------------------------------- [ features ... [
class FeatureMap(object):
    """
    phi(z) = [1, z_norm, rbf_1(z_norm) .. rbf_K(z_norm)]

    z_norm maps the input box to [-1, 1]**d; the RBF centres lie in the
    normalised box.

    >>> fm = FeatureMap([0., 0.], [2., 4.], count=0)
    >>> fm(np.array([[1., 4.]]))
    array([[1., 0., 1.]])
    """

    def __init__(self, low, high, centers=None, count=0, width=0.5,
                 rng_seed=0):
        self.low = np.asarray(low, dtype=float).reshape(-1)
        self.high = np.asarray(high, dtype=float).reshape(-1)
        if self.low.shape != self.high.shape:
            raise DimensionMismatch(what='feature box', left=self.low.shape,
                                    right=self.high.shape)
        if np.any(self.high <= self.low):
            raise InvalidParameter(name='feature box', value='...',
                                   reason='low < high expected')
        d = self.low.shape[0]
        if centers is None:
            rng = make_rng(rng_seed)
            centers = rng.uniform(-1.0, 1.0, size=(int(count), d))
        self.centers = np.asarray(centers, dtype=float).reshape(-1, d)
        width = float(width)
        if not width > 0:
            raise InvalidParameter(name='width', value=width,
                                   reason='positive number expected')
        self.width = width

    @property
    def in_dim(self):
        return self.low.shape[0]

    @property
    def size(self):
        return 1 + self.in_dim + self.centers.shape[0]

    def normalize(self, z):
        return 2.0 * (z - self.low) / (self.high - self.low) - 1.0

    def __call__(self, z):
        z = np.atleast_2d(np.asarray(z, dtype=float))
        if z.shape[1] != self.in_dim:
            raise DimensionMismatch(what='feature input', left=z.shape[1],
                                    right=self.in_dim)
        zn = self.normalize(z)
        parts = [np.ones((zn.shape[0], 1)), zn]
        if self.centers.shape[0]:
            diff = zn[:, None, :] - self.centers[None, :, :]
            sq = np.sum(diff * diff, axis=2)
            parts.append(np.exp(-sq / (2.0 * self.width ** 2)))
        return np.hstack(parts)

    def as_dict(self):
        return {'low': self.low.tolist(),
                'high': self.high.tolist(),
                'centers': self.centers.tolist(),
                'width': self.width,
                }

    @classmethod
    def from_dict(cls, dic):
        return cls(dic['low'], dic['high'],
                   centers=np.asarray(dic['centers'],
                                      dtype=float).reshape(-1, len(dic['low'])),
                   width=dic['width'])
# ---------------------------------------------------- ] ... features ]


# -------------------------------------------------- [ regressors ... [
class GaussianRegressor(object):
    """
    Linear-in-features mean, state-independent diagonal variance

    The training step is a gradient step on the batch negative
    log-likelihood, preconditioned with the inverse Fisher information of
    the output Gaussian: the weight gradient is scaled by the variance of
    its output, and the variance moves by 2 var**2 d nll / d var, i.e. to
    (1 - lr) var + lr mse (positive for lr < 1).
    """
    kind = 'regressor'

    def __init__(self, features, out_dim, weights=None, log_var=None):
        self.features = features
        self.out_dim = int(out_dim)
        if weights is None:
            weights = np.zeros((self.out_dim, features.size))
        self.weights = np.array(weights, dtype=float).reshape(
            self.out_dim, features.size)
        if log_var is None:
            log_var = np.zeros(self.out_dim)
        self.log_var = np.array(log_var, dtype=float).reshape(self.out_dim)

    @property
    def variances(self):
        return np.maximum(np.exp(self.log_var), COV_FLOOR)

    def predict_mean(self, z):
        return self.features(z).dot(self.weights.T)

    def _check_targets(self, z, y):
        z = np.atleast_2d(np.asarray(z, dtype=float))
        y = np.asarray(y, dtype=float).reshape(z.shape[0], -1)
        if y.shape[1] != self.out_dim:
            raise DimensionMismatch(what='%s targets' % self.kind,
                                    left=y.shape[1], right=self.out_dim)
        if z.shape[0] < 1:
            raise InvalidParameter(name='batch', value=[],
                                   reason='non-empty batch expected')
        return z, y

    def nll(self, z, y):
        """
        Mean negative log-likelihood of targets y given inputs z
        """
        z, y = self._check_targets(z, y)
        r = y - self.predict_mean(z)
        var = self.variances
        return float(np.mean(0.5 * np.sum(LOG_2PI + np.log(var)
                                          + r * r / var, axis=1)))

    def nll_and_gradient(self, z, y):
        """
        Return (nll, d nll / d weights, d nll / d log_var)
        """
        z, y = self._check_targets(z, y)
        phi = self.features(z)
        r = y - phi.dot(self.weights.T)
        var = np.exp(self.log_var)
        batch = z.shape[0]
        nll = float(np.mean(0.5 * np.sum(LOG_2PI + self.log_var
                                         + r * r / var, axis=1)))
        grad_w = -(r / var).T.dot(phi) / batch
        grad_lv = 0.5 * np.mean(1.0 - r * r / var, axis=0)
        return nll, grad_w, grad_lv

    def step(self, z, y, lr):
        """
        One preconditioned NLL gradient step on a batch;
        returns the pre-step batch NLL
        """
        lr = float(lr)
        if not lr >= 0:
            raise InvalidParameter(name='lr', value=lr,
                                   reason='non-negative number expected')
        nll, grad_w, grad_lv = self.nll_and_gradient(z, y)
        if lr == 0:
            return nll
        var = np.exp(self.log_var)
        step_w = var[:, np.newaxis] * grad_w
        new_var = var * (1.0 - 2.0 * lr * grad_lv)
        if not (np.all(np.isfinite(step_w)) and np.all(np.isfinite(new_var))):
            raise NonFiniteGradient(what=self.kind)
        self.weights = self.weights - lr * step_w
        self.log_var = np.log(np.maximum(new_var, COV_FLOOR))
        return nll

    def get_params(self):
        return np.concatenate([self.weights.ravel(), self.log_var])

    def set_params(self, params):
        params = np.asarray(params, dtype=float)
        n_w = self.weights.size
        if params.shape != (n_w + self.out_dim,):
            raise DimensionMismatch(what='parameter vector',
                                    left=params.shape[0],
                                    right=n_w + self.out_dim)
        self.weights = params[:n_w].reshape(self.weights.shape).copy()
        self.log_var = params[n_w:].copy()

    def as_dict(self):
        return {'kind': self.kind,
                'out_dim': self.out_dim,
                'features': self.features.as_dict(),
                'weights': self.weights.tolist(),
                'log_var': self.log_var.tolist(),
                }


def _box_arrays(box):
    box = np.asarray(box, dtype=float).reshape(-1, 2)
    return box[:, 0], box[:, 1]


class _TransitionModel(GaussianRegressor):
    """
    A regressor whose inputs are (state, action) pairs taken from transitions
    """

    def __init__(self, state_dim, action_dim, state_box, action_box,
                 rbf_count=64, rbf_width=0.5, rng_seed=0, features=None,
                 **kwargs):
        self.state_dim = int(state_dim)
        self.action_dim = int(action_dim)
        if features is None:
            s_lo, s_hi = _box_arrays(state_box)
            a_lo, a_hi = _box_arrays(action_box)
            if s_lo.shape[0] != self.state_dim:
                raise DimensionMismatch(what='state box',
                                        left=s_lo.shape[0],
                                        right=self.state_dim)
            if a_lo.shape[0] != self.action_dim:
                raise DimensionMismatch(what='action box',
                                        left=a_lo.shape[0],
                                        right=self.action_dim)
            features = FeatureMap(np.concatenate([s_lo, a_lo]),
                                  np.concatenate([s_hi, a_hi]),
                                  count=rbf_count, width=rbf_width,
                                  rng_seed=rng_seed)
        GaussianRegressor.__init__(self, features, self._out_dim(), **kwargs)

    def _out_dim(self):
        raise NotImplementedError

    def inputs(self, x, u):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        u = np.atleast_2d(np.asarray(u, dtype=float))
        if x.shape[1] != self.state_dim:
            raise DimensionMismatch(what='%s state' % self.kind,
                                    left=x.shape[1], right=self.state_dim)
        if u.shape[1] != self.action_dim:
            raise DimensionMismatch(what='%s action' % self.kind,
                                    left=u.shape[1], right=self.action_dim)
        if x.shape[0] != u.shape[0]:
            if x.shape[0] == 1:
                x = np.repeat(x, u.shape[0], axis=0)
            elif u.shape[0] == 1:
                u = np.repeat(u, x.shape[0], axis=0)
            else:
                raise DimensionMismatch(what='%s batch' % self.kind,
                                        left=x.shape[0], right=u.shape[0])
        return np.hstack([x, u])

    def arrays_from(self, batch):
        """
        Inputs and targets from a list of transitions; only training data
        is accepted
        """
        if not batch:
            raise InvalidParameter(name='batch', value=[],
                                   reason='non-empty batch expected')
        for t in batch:
            if t.source != TRAIN:
                raise ProvenanceError(source=t.source, use='model training')
        return self._arrays(batch)

    def as_dict(self):
        dic = GaussianRegressor.as_dict(self)
        dic.update(state_dim=self.state_dim, action_dim=self.action_dim)
        return dic

    @classmethod
    def from_dict(cls, dic):
        if dic.get('kind') != cls.kind:
            raise CheckpointError(path='<dict>',
                                  reason='%r model expected, found %r'
                                         % (cls.kind, dic.get('kind')))
        return cls(dic['state_dim'], dic['action_dim'], None, None,
                   features=FeatureMap.from_dict(dic['features']),
                   weights=dic['weights'], log_var=dic['log_var'])


class NominalModel(_TransitionModel):
    """
    Gaussian next-state model p(x' | x, u)

    periodic -- indexes of angle coordinates; their targets are unwrapped
                relative to the current state, so a step across +-pi is a
                small one
    """
    kind = 'nominal'

    def __init__(self, state_dim, action_dim, state_box, action_box,
                 **kwargs):
        periodic = tuple(int(i) for i in kwargs.pop('periodic', ()))
        for i in periodic:
            if not 0 <= i < int(state_dim):
                raise InvalidParameter(name='periodic', value=periodic,
                                       reason='state indexes expected')
        self.periodic = periodic
        _TransitionModel.__init__(self, state_dim, action_dim, state_box,
                                  action_box, **kwargs)

    def _out_dim(self):
        return self.state_dim

    def _arrays(self, batch):
        x = np.array([t.x for t in batch])
        z = self.inputs(x, np.array([t.u for t in batch]))
        y = wrap_periodic([t.x_next for t in batch], self.periodic, center=x)
        return z, y

    def predict(self, x, u):
        """
        Next-state GaussianKernel for one state-action pair
        """
        mean = self.predict_mean(self.inputs(x, u))[0]
        return GaussianKernel(mean, self.variances)

    def predict_batch(self, x, actions):
        """
        Next-state means (one row per action) and the shared variances
        """
        return self.predict_mean(self.inputs(x, actions)), self.variances

    def as_dict(self):
        dic = _TransitionModel.as_dict(self)
        dic['periodic'] = list(self.periodic)
        return dic

    @classmethod
    def from_dict(cls, dic):
        model = super(NominalModel, cls).from_dict(dic)
        model.periodic = tuple(int(i) for i in dic.get('periodic', ()))
        return model


class CostModel(_TransitionModel):
    """
    Gaussian stage cost model c(x', u) of the state reached by action u
    """
    kind = 'cost'

    def _out_dim(self):
        return 1

    def _arrays(self, batch):
        z = self.inputs(np.array([t.x_next for t in batch]),
                        np.array([t.u for t in batch]))
        y = np.array([[t.cost] for t in batch])
        return z, y

    def predict_cost(self, x, u):
        """
        Mean and variance of the cost at state x reached by action u

        >>> CostModel(1, 1, [[-1, 1]], [[-1, 1]]).predict_cost([0.], [0.])
        (0.0, 1.0)
        """
        mean = self.predict_mean(self.inputs(x, u))[0, 0]
        return float(mean), float(self.variances[0])

    def predict_costs(self, xs, u):
        """
        Mean costs for the rows of xs, reached by the action u (one row,
        or one per state)
        """
        return self.predict_mean(self.inputs(xs, u))[:, 0]


def predict(model, x, u):
    return model.predict(x, u)


def predict_cost(model, x, u):
    return model.predict_cost(x, u)


def train_step(model, batch, lr):
    """
    One training step of the dynamics model on a list of transitions;
    returns the pre-step batch NLL
    """
    z, y = model.arrays_from(batch)
    return model.step(z, y, lr)


def train_cost_step(model, batch, lr):
    """
    One training step of the cost model on a list of transitions
    """
    z, y = model.arrays_from(batch)
    return model.step(z, y, lr)
# -------------------------------------------------- ] ... regressors ]


FitReport = namedtuple('FitReport',
                       'steps dyn_loss cost_loss holdout_before holdout_after')


@profile(debug_active, logger)
def fit_models(nominal, cost_model, buffer, config, rng):
    """
    The model update between episodes: train_steps_per_episode minibatch
    steps for both models on the training part of the buffer

    Returns a FitReport; the holdout NLL of the dynamics model before and
    after the update is None if nothing was held out.
    """
    steps = config['train_steps_per_episode']
    lr = config['lr']
    train, holdout = buffer.split(config['holdout_fraction'], rng)
    if not train or not steps:
        return FitReport(0, None, None, None, None)
    if holdout:
        hz, hy = nominal.arrays_from(holdout)
        before = nominal.nll(hz, hy)
    dyn_losses = []
    cost_losses = []
    done = 0
    for idx in cycle_batches(len(train), config['batch_size'], steps,
                             rng):
        batch = [train[i] for i in idx]
        dyn_losses.append(train_step(nominal, batch, lr))
        cost_losses.append(train_cost_step(cost_model, batch, lr))
        done += 1
    after = None
    if holdout:
        after = nominal.nll(hz, hy)
    else:
        before = None
    report = FitReport(done, float(np.mean(dyn_losses)),
                       float(np.mean(cost_losses)), before, after)
    if debug_active:
        DEBUG('fit_models: %(steps)d steps, dynamics NLL %(dyn_loss)g,'
              ' cost NLL %(cost_loss)g, holdout %(holdout_before)s'
              ' -> %(holdout_after)s', report._asdict())
    return report


# ------------------------------------------------- [ checkpoints ... [
def save_checkpoint(path, nominal, cost_model, meta=None):
    """
    Write both models to a JSON checkpoint file
    """
    data = {'format': CHECKPOINT_FORMAT,
            'version': CHECKPOINT_VERSION,
            'meta': meta or {},
            'nominal': nominal.as_dict(),
            'cost': cost_model.as_dict(),
            }
    with open(path, 'w') as f:
        json.dump(data, f, sort_keys=True, indent=1)
        f.write('\n')


def load_checkpoint(path):
    """
    Read a checkpoint file; return (nominal, cost_model, meta)
    """
    try:
        with open(path) as f:
            data = json.load(f)
    except (IOError, OSError) as e:
        raise CheckpointError(path=path, reason=str(e))
    except ValueError as e:
        raise CheckpointError(path=path, reason='no valid JSON (%s)' % e)
    if not isinstance(data, dict) or data.get('format') != CHECKPOINT_FORMAT:
        raise CheckpointError(path=path, reason='unknown format')
    version = data.get('version')
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(path=path,
                              reason='unsupported version %r' % (version,))
    try:
        nominal = NominalModel.from_dict(data['nominal'])
        cost_model = CostModel.from_dict(data['cost'])
    except CheckpointError as e:
        raise CheckpointError(path=path, reason=e.kwargs['reason'])
    except (KeyError, TypeError, ValueError) as e:
        raise CheckpointError(path=path, reason='incomplete model data (%s)'
                                                % (e,))
    return nominal, cost_model, data.get('meta') or {}
# ------------------------------------------------- ] ... checkpoints ]
