# -*- coding: utf-8 -*- vim: ts=8 sts=4 sw=4 si et tw=79
"""\
Desk-scale control environments with a ground-truth simulator

PointMassEnv -- planar double integrator with one circular obstacle between
                start and goal
PendulumEnv -- torque-controlled pendulum, nonlinear dynamics

Environments are value-semantic: step() takes a state and returns the next
one, so independent rollouts never share anything but the environment's
constant parameters.  Perturbations (friction, drift, reward noise) act on
the simulator only; the learned models never see them except through data.

>>> env = PointMassEnv(process_noise=0.0)
>>> x0 = env.reset()
>>> x1, cost, done = env.step(x0, [0., 0.])
>>> bool(np.all(x1 == x0)), done
(True, False)
"""
# Python compatibility:
from __future__ import absolute_import

# Standard library:
from collections import namedtuple

# 3rd party:
import numpy as np

# Local imports:
from visaplan.drfree.csvfiles import write_csv
from visaplan.drfree.exceptions import DimensionMismatch, InvalidParameter
from visaplan.drfree.gaussian import make_rng, wrap_angle, wrap_periodic

__all__ = [
    'EnvSpec',
    'PerturbationSpec',
    'NO_PERTURBATION',
    'PointMassEnv',
    'PendulumEnv',
    'make_env',
    'trajectory_fieldnames',
    'trajectory_rows',
    'write_trajectory',
    ]

EnvSpec = namedtuple('EnvSpec',
                     'state_dim action_dim action_box state_box goal'
                     ' goal_indices periodic obstacles dt max_steps')


class PerturbationSpec(namedtuple('PerturbationSpec',
                                  'friction drift reward_noise_sigma')):
    """
    Changes of the true environment: velocities are multiplied by friction,
    drift is added to them, and costs get Gaussian noise.

    >>> PerturbationSpec()
    PerturbationSpec(friction=1.0, drift=0.0, reward_noise_sigma=0.0)
    >>> PerturbationSpec(reward_noise_sigma=-1)
    Traceback (most recent call last):
    ...
    visaplan.drfree.exceptions.InvalidParameter: Invalid value for reward_noise_sigma: -1.0 (non-negative number expected)
    """
    __slots__ = ()

    def __new__(cls, friction=1.0, drift=0.0, reward_noise_sigma=0.0):
        friction = float(friction)
        reward_noise_sigma = float(reward_noise_sigma)
        if not friction >= 0:
            raise InvalidParameter(name='friction', value=friction,
                                   reason='non-negative number expected')
        if not reward_noise_sigma >= 0:
            raise InvalidParameter(name='reward_noise_sigma',
                                   value=reward_noise_sigma,
                                   reason='non-negative number expected')
        if np.ndim(drift):
            drift = tuple(float(d) for d in drift)
        else:
            drift = float(drift)
        return super(PerturbationSpec, cls).__new__(cls, friction, drift,
                                                    reward_noise_sigma)

    @classmethod
    def for_training(cls, config):
        """
        Training sees reward noise only
        """
        return cls(reward_noise_sigma=config['train_reward_noise'])

    @classmethod
    def for_evaluation(cls, config):
        return cls(friction=config['eval_friction'],
                   drift=config['eval_drift'],
                   reward_noise_sigma=config['eval_reward_noise'])

    @property
    def is_null(self):
        return (self.friction == 1.0 and not np.any(self.drift)
                and self.reward_noise_sigma == 0)


NO_PERTURBATION = PerturbationSpec()


class _Env(object):
    """
    Common parts of the environments
    """
    name = None
    state_names = ()
    action_names = ()

    def _check_action(self, action):
        u = np.asarray(action, dtype=float).reshape(-1)
        if u.shape[0] != self.spec.action_dim:
            raise DimensionMismatch(what='action', left=u.shape[0],
                                    right=self.spec.action_dim)
        low, high = self.action_low, self.action_high
        return np.clip(u, low, high)

    @property
    def action_low(self):
        return np.array([lo for (lo, hi) in self.spec.action_box])

    @property
    def action_high(self):
        return np.array([hi for (lo, hi) in self.spec.action_box])

    def step(self, env_state, action, perturbation=None, rng_seed=None):
        """
        One simulator step; returns (next_state, cost, done)

        Without rng_seed, the step is noise-free.  With one, process noise
        and reward noise are drawn (both, always, in this order).
        """
        if perturbation is None:
            perturbation = NO_PERTURBATION
        x = np.asarray(env_state, dtype=float).reshape(-1)
        if x.shape[0] != self.spec.state_dim:
            raise DimensionMismatch(what='state', left=x.shape[0],
                                    right=self.spec.state_dim)
        u = self._check_action(action)
        x_next = self.dynamics(x, u, perturbation)
        noise = 0.0
        if rng_seed is not None:
            rng = make_rng(rng_seed)
            x_next = x_next + self.process_noise * rng.standard_normal(
                self.spec.state_dim)
            noise = perturbation.reward_noise_sigma * rng.standard_normal()
        x_next = self._project(x_next)
        cost = float(self.stage_cost(x_next[None, :])[0]) + noise
        done = bool(self.goal_distance(x_next[None, :])[0]
                    < self.success_threshold)
        return x_next, cost, done

    def goal_state(self):
        return np.asarray(self.spec.goal, dtype=float)

    def canonical_states(self, states):
        """
        The states with their periodic coordinates wrapped to [-pi, pi)
        """
        return wrap_periodic(states, self.spec.periodic)

    def clearance(self, states):
        """
        Distance of each state to the nearest obstacle centre
        (inf without obstacles)
        """
        states = np.atleast_2d(states)
        if not self.spec.obstacles:
            return np.full(states.shape[0], np.inf)
        pos = states[:, list(self.spec.goal_indices)]
        dists = [np.linalg.norm(pos - np.asarray(c), axis=1)
                 for (c, r) in self.spec.obstacles]
        return np.min(np.vstack(dists), axis=0)


class PointMassEnv(_Env):
    """
    Planar point mass: state (px, py, vx, vy), action (ax, ay)

    The cost of reaching a state is the squared distance to the goal plus a
    quadratic hinge penalty inside radius + margin of each obstacle.

    integrator -- 'symplectic' (x' = x + dt v', the default) or 'explicit'
                  (x' = x + dt v)

    >>> env = PointMassEnv(dt=0.1, process_noise=0.0, integrator='explicit',
    ...                    start=(0., 0.), obstacles=())
    >>> x = env.reset()
    >>> for i in range(10):
    ...     x, cost, done = env.step(x, [1., 0.])
    >>> round(float(x[0]), 12), round(float(x[2]), 12)
    (0.45, 1.0)
    """
    name = 'pointmass'
    state_names = ('px', 'py', 'vx', 'vy')
    action_names = ('ax', 'ay')

    def __init__(self, dt=0.1, max_steps=1000, process_noise=0.01,
                 goal=(0.7, 0.7), start=(-0.7, -0.7),
                 obstacles=(((0.0, 0.0), 0.1),), margin=0.05,
                 obstacle_weight=50.0, success_threshold=0.05,
                 action_box=None, integrator='symplectic', max_speed=2.0):
        if integrator not in ('symplectic', 'explicit'):
            raise InvalidParameter(name='integrator', value=integrator,
                                   reason="'symplectic' or 'explicit'"
                                          " expected")
        if not dt > 0:
            raise InvalidParameter(name='dt', value=dt,
                                   reason='positive number expected')
        for center, radius in obstacles:
            if not radius > 0:
                raise InvalidParameter(name='obstacle radius', value=radius,
                                       reason='positive number expected')
        if not np.all(np.abs(goal) <= 1):
            raise InvalidParameter(name='goal', value=goal,
                                   reason='goal outside the state box')
        if action_box is None:
            action_box = [[-1.0, 1.0], [-1.0, 1.0]]
        self.spec = EnvSpec(
            state_dim=4,
            action_dim=2,
            action_box=[[float(lo), float(hi)] for (lo, hi) in action_box],
            state_box=[[-1.0, 1.0], [-1.0, 1.0],
                       [-max_speed, max_speed], [-max_speed, max_speed]],
            goal=(float(goal[0]), float(goal[1]), 0.0, 0.0),
            goal_indices=(0, 1),
            periodic=(),
            obstacles=tuple((tuple(float(c) for c in center), float(radius))
                            for (center, radius) in obstacles),
            dt=float(dt),
            max_steps=int(max_steps))
        if len(self.spec.action_box) != 2:
            raise DimensionMismatch(what='action box',
                                    left=len(self.spec.action_box), right=2)
        self.start = np.array([start[0], start[1], 0.0, 0.0], dtype=float)
        self.process_noise = float(process_noise)
        self.margin = float(margin)
        self.obstacle_weight = float(obstacle_weight)
        self.success_threshold = float(success_threshold)
        self.integrator = integrator

    def reset(self):
        return self.start.copy()

    def dynamics(self, x, u, perturbation):
        dt = self.spec.dt
        pos, vel = x[:2], x[2:]
        vel_next = (perturbation.friction * vel + dt * u
                    + np.asarray(perturbation.drift))
        if self.integrator == 'symplectic':
            pos_next = pos + dt * vel_next
        else:
            pos_next = pos + dt * vel
        return np.concatenate([pos_next, vel_next])

    def _project(self, x):
        x = x.copy()
        x[:2] = np.clip(x[:2], -1.0, 1.0)
        return x

    def obstacle_penalty(self, positions):
        """
        Quadratic hinge: zero outside radius + margin, positive inside

        >>> env = PointMassEnv()
        >>> env.obstacle_penalty(np.array([[0.5, 0.5], [0.0, 0.1]]))
        array([0.   , 0.125])
        """
        positions = np.atleast_2d(positions)
        res = np.zeros(positions.shape[0])
        for center, radius in self.spec.obstacles:
            dist = np.linalg.norm(positions - np.asarray(center), axis=1)
            hinge = np.maximum(radius + self.margin - dist, 0.0)
            res = res + self.obstacle_weight * hinge * hinge
        return res

    def goal_distance(self, states):
        states = np.atleast_2d(states)
        return np.linalg.norm(states[:, :2] - np.asarray(self.spec.goal[:2]),
                              axis=1)

    def stage_cost(self, states):
        states = np.atleast_2d(states)
        dist = self.goal_distance(states)
        return dist * dist + self.obstacle_penalty(states[:, :2])


class PendulumEnv(_Env):
    """
    Torque-controlled pendulum: state (theta, omega), action (torque,)

        theta'' = -(g/l) sin(theta) + u / (m l**2)

    integrated with velocity Verlet; theta = 0 is the stable equilibrium.
    The task is to hold the pendulum at the goal angle.

    >>> env = PendulumEnv(process_noise=0.0)
    >>> x, cost, done = env.step([0., 0.], [0.])
    >>> x.tolist()
    [0.0, 0.0]
    """
    name = 'pendulum'
    state_names = ('theta', 'omega')
    action_names = ('torque',)

    def __init__(self, dt=0.05, max_steps=1000, process_noise=0.01,
                 goal_angle=np.pi / 6, start_angle=0.0, gravity=9.81,
                 length=1.0, mass=1.0, velocity_weight=0.1,
                 success_threshold=0.05, action_box=None, max_speed=8.0):
        if not dt > 0:
            raise InvalidParameter(name='dt', value=dt,
                                   reason='positive number expected')
        if action_box is None:
            action_box = [[-8.0, 8.0]]
        self.spec = EnvSpec(
            state_dim=2,
            action_dim=1,
            action_box=[[float(lo), float(hi)] for (lo, hi) in action_box],
            state_box=[[-np.pi, np.pi], [-max_speed, max_speed]],
            goal=(float(goal_angle), 0.0),
            goal_indices=(0,),
            periodic=(0,),
            obstacles=(),
            dt=float(dt),
            max_steps=int(max_steps))
        if len(self.spec.action_box) != 1:
            raise DimensionMismatch(what='action box',
                                    left=len(self.spec.action_box), right=1)
        self.start = np.array([start_angle, 0.0], dtype=float)
        self.process_noise = float(process_noise)
        self.gravity = float(gravity)
        self.length = float(length)
        self.mass = float(mass)
        self.velocity_weight = float(velocity_weight)
        self.success_threshold = float(success_threshold)

    def reset(self):
        return self.start.copy()

    def acceleration(self, theta, u):
        return (-(self.gravity / self.length) * np.sin(theta)
                + u / (self.mass * self.length ** 2))

    def dynamics(self, x, u, perturbation):
        dt = self.spec.dt
        theta, omega = x[0], x[1]
        torque = u[0]
        acc = self.acceleration(theta, torque)
        theta_next = theta + dt * omega + 0.5 * dt * dt * acc
        omega_next = omega + 0.5 * dt * (acc
                                         + self.acceleration(theta_next,
                                                             torque))
        omega_next = (perturbation.friction * omega_next
                      + float(np.ravel(perturbation.drift)[0]))
        return np.array([theta_next, omega_next])

    def _project(self, x):
        return np.array([wrap_angle(x[0]), x[1]])

    def energy(self, x):
        """
        Mechanical energy, zero at rest in the stable equilibrium
        """
        theta, omega = x[0], x[1]
        m, l = self.mass, self.length
        return (0.5 * m * l * l * omega * omega
                + m * self.gravity * l * (1.0 - np.cos(theta)))

    def goal_distance(self, states):
        states = np.atleast_2d(states)
        return np.abs(wrap_angle(states[:, 0] - self.spec.goal[0]))

    def stage_cost(self, states):
        states = np.atleast_2d(states)
        err = wrap_angle(states[:, 0] - self.spec.goal[0])
        return err * err + self.velocity_weight * states[:, 1] ** 2


def make_env(config):
    """
    Create the environment named by config['env']

    >>> from visaplan.drfree.config import make_config
    >>> make_env(make_config(env='pendulum')).name
    'pendulum'
    """
    kwargs = {'dt': config['dt'],
              'max_steps': config['max_steps'],
              'process_noise': config['process_noise'],
              'success_threshold': config['success_threshold'],
              'action_box': config['action_box'],
              }
    name = config['env']
    if name == 'pointmass':
        return PointMassEnv(**kwargs)
    elif name == 'pendulum':
        return PendulumEnv(**kwargs)
    raise InvalidParameter(name='env', value=name, reason='unknown environment')


# ------------------------------------------------ [ trajectories ... [
def trajectory_fieldnames(env):
    return (['step']
            + list(env.state_names)
            + list(env.action_names)
            + ['cost', 'distance'])


def trajectory_rows(env, states, actions, costs):
    """
    Dict rows for a trajectory; states[k] is reached by actions[k]
    """
    res = []
    distances = env.goal_distance(np.asarray(states))
    for k, (x, u, c) in enumerate(zip(states, actions, costs)):
        row = {'step': k + 1, 'cost': c, 'distance': distances[k]}
        row.update(zip(env.state_names, x))
        row.update(zip(env.action_names, u))
        res.append(row)
    return res


def write_trajectory(path, env, states, actions, costs, comments=()):
    """
    Write one trajectory as CSV (step, state..., action..., cost, distance)
    """
    write_csv(path, trajectory_fieldnames(env),
              trajectory_rows(env, states, actions, costs), comments)
# ------------------------------------------------ ] ... trajectories ]
