# -*- coding: utf-8 -*- vim: ts=8 sts=4 sw=4 si et tw=79
"""
Tests for visaplan.drfree.models
"""
# Python compatibility:
from __future__ import absolute_import

# Standard library:
import json

# 3rd party:
import numpy as np
import pytest

# Local imports:
from visaplan.drfree.config import make_config
from visaplan.drfree.exceptions import (
    CheckpointError,
    DimensionMismatch,
    InvalidParameter,
    NonFiniteGradient,
    ProvenanceError,
    )
from visaplan.drfree.models import (
    CostModel,
    FeatureMap,
    GaussianRegressor,
    NominalModel,
    ReplayBuffer,
    fit_models,
    load_checkpoint,
    make_transition,
    save_checkpoint,
    train_step,
    )

BOX2 = [[-1., 1.], [-1., 1.]]
BOX1 = [[-1., 1.]]


# ------------------------------------------------------ [ buffer ... [
def test_buffer_is_a_fifo_ring():
    buf = ReplayBuffer(3)
    for i in range(5):
        buf.append(make_transition([i, 0], [0], [i, 1], 0.))
    assert len(buf) == 3
    assert buf.total_added == 5
    assert [t.x[0] for t in buf] == [2., 3., 4.]


def test_buffer_rejects_inconsistent_dimensions():
    buf = ReplayBuffer(10)
    buf.append(make_transition([0, 0], [0], [0, 0], 0.))
    with pytest.raises(DimensionMismatch):
        buf.append(make_transition([0, 0, 0], [0], [0, 0, 0], 0.))


def test_buffer_counts_sources():
    buf = ReplayBuffer(10)
    buf.extend([make_transition([0], [0], [0], 0.),
                make_transition([0], [0], [0], 0., source='eval')])
    assert buf.sources() == {'train': 1, 'eval': 1}


def test_buffer_split_holds_out_a_fraction():
    buf = ReplayBuffer(100)
    for i in range(20):
        buf.append(make_transition([i], [0], [i], 0.))
    train, holdout = buf.split(0.25, np.random.default_rng(0))
    assert len(train) == 15 and len(holdout) == 5
    seen = sorted(t.x[0] for t in train + holdout)
    assert seen == [float(i) for i in range(20)]


def test_buffer_capacity_must_be_positive():
    with pytest.raises(InvalidParameter):
        ReplayBuffer(0)
# ------------------------------------------------------ ] ... buffer ]


def test_feature_map_dimensions():
    fm = FeatureMap([-1., -1., 0.], [1., 1., 2.], count=5, rng_seed=3)
    assert fm.size == 1 + 3 + 5
    phi = fm(np.zeros((4, 3)))
    assert phi.shape == (4, 9)
    assert np.all(phi[:, 0] == 1)
    with pytest.raises(DimensionMismatch):
        fm(np.zeros((4, 2)))
    copy = FeatureMap.from_dict(fm.as_dict())
    assert np.array_equal(copy(np.ones((2, 3))), fm(np.ones((2, 3))))


def test_gradients_match_finite_differences():
    rng = np.random.default_rng(2024)
    for i in range(20):
        in_dim = int(rng.integers(1, 4))
        out_dim = int(rng.integers(1, 3))
        fm = FeatureMap(-np.ones(in_dim), np.ones(in_dim),
                        count=int(rng.integers(0, 4)), rng_seed=i)
        model = GaussianRegressor(fm, out_dim,
                                  weights=rng.normal(size=(out_dim, fm.size)),
                                  log_var=rng.normal(scale=0.5,
                                                     size=out_dim))
        z = rng.uniform(-1, 1, size=(8, in_dim))
        y = rng.normal(size=(8, out_dim))
        nll, grad_w, grad_lv = model.nll_and_gradient(z, y)
        assert nll == pytest.approx(model.nll(z, y), rel=1e-12)
        analytic = np.concatenate([grad_w.ravel(), grad_lv])
        params = model.get_params()
        h = 1e-6
        numeric = np.zeros_like(params)
        for j in range(params.shape[0]):
            plus = params.copy()
            plus[j] += h
            minus = params.copy()
            minus[j] -= h
            model.set_params(plus)
            f_plus = model.nll(z, y)
            model.set_params(minus)
            f_minus = model.nll(z, y)
            numeric[j] = (f_plus - f_minus) / (2 * h)
        model.set_params(params)
        scale = max(np.max(np.abs(analytic)), 1e-3)
        assert np.max(np.abs(analytic - numeric)) / scale <= 1e-5


def test_step_follows_the_scaled_likelihood_gradient():
    rng = np.random.default_rng(11)
    fm = FeatureMap(-np.ones(2), np.ones(2), count=3, rng_seed=5)
    model = GaussianRegressor(fm, 2, weights=rng.normal(size=(2, fm.size)),
                              log_var=[0.3, -0.4])
    z = rng.uniform(-1, 1, size=(16, 2))
    y = rng.normal(size=(16, 2))
    nll, grad_w, grad_lv = model.nll_and_gradient(z, y)
    var = np.exp(model.log_var)
    weights = model.weights.copy()
    lr = 0.05
    assert model.step(z, y, lr) == pytest.approx(nll, rel=1e-12)
    assert np.allclose(model.weights,
                       weights - lr * var[:, np.newaxis] * grad_w,
                       rtol=0, atol=1e-12)
    assert np.allclose(np.exp(model.log_var),
                       var * (1 - 2 * lr * grad_lv),
                       rtol=0, atol=1e-12)
    # a small step decreases the batch likelihood loss
    assert model.nll(z, y) < nll



def test_linear_dynamics_are_recovered():
    rng = np.random.default_rng(7)
    a = np.array([[0.9, 0.1], [-0.2, 0.8]])
    b = np.array([[0.3], [0.1]])
    model = NominalModel(2, 1, BOX2, BOX1, rbf_count=0)
    x = rng.uniform(-1, 1, size=(400, 2))
    u = rng.uniform(-1, 1, size=(400, 1))
    y = x.dot(a.T) + u.dot(b.T) + 0.01 * rng.normal(size=(400, 2))
    z = model.inputs(x, u)
    phi = model.features(z)
    lr = 1.0 / np.max(np.linalg.eigvalsh(phi.T.dot(phi) / 400))
    for i in range(3000):
        model.step(z, y, lr)
    pred = model.predict_mean(model.inputs([[0.5, -0.5]], [[1.0]]))[0]
    expected = a.dot([0.5, -0.5]) + b.dot([1.0])
    assert np.allclose(pred, expected, atol=0.01)
    assert np.all(model.variances < 1e-3)


def test_nll_on_a_fixed_batch_does_not_increase():
    rng = np.random.default_rng(9)
    model = NominalModel(2, 1, BOX2, BOX1, rbf_count=8, rng_seed=2)
    x = rng.uniform(-1, 1, size=(64, 2))
    u = rng.uniform(-1, 1, size=(64, 1))
    y = np.tanh(x) + 0.1 * u
    z = model.inputs(x, u)
    losses = [model.step(z, y, 0.01) for i in range(300)]
    for before, after in zip(losses, losses[1:]):
        assert after <= before + 1e-6


def test_variance_shrinks_on_noiseless_data():
    rng = np.random.default_rng(10)
    model = NominalModel(2, 1, BOX2, BOX1, rbf_count=0)
    x = rng.uniform(-1, 1, size=(100, 2))
    u = rng.uniform(-1, 1, size=(100, 1))
    y = 0.5 * x + 0.1 * u
    z = model.inputs(x, u)
    history = []
    for i in range(200):
        model.step(z, y, 0.1)
        history.append(model.variances.copy())
    windows = np.array(history).reshape(20, 10, 2).mean(axis=1)
    assert np.all(np.diff(windows, axis=0) <= 0)


def test_angle_targets_are_unwrapped_around_the_state():
    # a step from 3.1 to -3.1 is a small step across +-pi
    batch = [make_transition([3.1, 0.], [0.], [-3.1, 0.5], 0.)]
    model = NominalModel(2, 1, BOX2, BOX1, rbf_count=0, periodic=(0,))
    z, y = model.arrays_from(batch)
    assert y[0, 0] == pytest.approx(2 * np.pi - 3.1)
    assert y[0, 1] == 0.5
    plain = NominalModel(2, 1, BOX2, BOX1, rbf_count=0)
    assert plain.arrays_from(batch)[1][0, 0] == -3.1
    with pytest.raises(InvalidParameter):
        NominalModel(2, 1, BOX2, BOX1, rbf_count=0, periodic=(2,))


def test_identical_transitions_are_learned_exactly():
    model = NominalModel(1, 1, BOX1, BOX1, rbf_count=2)
    batch = [make_transition([0.2], [0.1], [0.4], 0.)] * 16
    for i in range(500):
        train_step(model, batch, 0.5)
    assert model.predict([0.2], [0.1]).mean[0] == pytest.approx(0.4,
                                                                abs=1e-6)
    assert model.variances[0] < 1e-6


def test_goal_distance_cost_is_learned_on_a_grid():
    grid = np.linspace(-1, 1, 21)
    z = np.array([[a, b] for a in grid for b in grid])
    y = np.sum((z - 0.7) ** 2, axis=1, keepdims=True)
    centres = np.array([[a, b] for a in np.linspace(-1, 1, 5)
                        for b in np.linspace(-1, 1, 5)])
    fm = FeatureMap([-1., -1.], [1., 1.], centers=centres, width=0.5)
    model = GaussianRegressor(fm, 1)
    phi = fm(z)
    lr = 1.0 / np.max(np.linalg.eigvalsh(phi.T.dot(phi) / z.shape[0]))
    for i in range(20000):
        model.step(z, y, lr)
    resid = y - model.predict_mean(z)
    r2 = 1.0 - np.sum(resid ** 2) / np.sum((y - y.mean()) ** 2)
    assert r2 > 0.95


def test_zero_learning_rate_changes_nothing():
    model = NominalModel(2, 1, BOX2, BOX1, rbf_count=4)
    before = model.get_params()
    z = model.inputs([[0.1, 0.2]], [[0.3]])
    model.step(z, [[1., 1.]], 0.0)
    assert np.array_equal(model.get_params(), before)
    with pytest.raises(InvalidParameter):
        model.step(z, [[1., 1.]], -0.1)


def test_non_finite_updates_are_rejected():
    model = NominalModel(1, 1, BOX1, BOX1, rbf_count=0)
    z = model.inputs([[0.]], [[0.]])
    with pytest.raises(NonFiniteGradient):
        model.step(z, [[1e308]], 1e10)


def test_training_accepts_training_data_only():
    model = NominalModel(1, 1, BOX1, BOX1, rbf_count=0)
    batch = [make_transition([0.], [0.], [0.1], 0., source='eval')]
    with pytest.raises(ProvenanceError):
        train_step(model, batch, 0.1)


def test_cost_model_regresses_on_the_reached_state():
    model = CostModel(1, 1, BOX1, BOX1, rbf_count=0)
    rng = np.random.default_rng(1)
    xs = rng.uniform(-1, 1, size=(200, 1))
    us = rng.uniform(-1, 1, size=(200, 1))
    batch = [make_transition([0.], u, x, 2.0 * x[0] + 1.0)
             for (x, u) in zip(xs, us)]
    z, y = model.arrays_from(batch)
    for i in range(2000):
        model.step(z, y, 0.5)
    mean, var = model.predict_cost([0.5], [0.])
    assert mean == pytest.approx(2.0, abs=1e-3)
    costs = model.predict_costs(np.array([[0.], [-0.5]]), [0.3])
    assert np.allclose(costs, [1.0, 0.0], atol=1e-3)


def test_fit_models_trains_both_models():
    config = make_config(train_steps_per_episode=30, batch_size=16,
                         holdout_fraction=0.2, lr=0.1)
    nominal = NominalModel(1, 1, BOX1, BOX1, rbf_count=0)
    cost_model = CostModel(1, 1, BOX1, BOX1, rbf_count=0)
    buf = ReplayBuffer(1000)
    rng = np.random.default_rng(5)
    for i in range(100):
        x, u = rng.uniform(-1, 1, size=2)
        buf.append(make_transition([x], [u], [0.5 * x + 0.2 * u], x * x))
    report = fit_models(nominal, cost_model, buf, config, rng)
    assert report.steps == 30
    assert report.holdout_after < report.holdout_before
    assert len(buf) == 100


def test_fit_models_without_data():
    config = make_config()
    nominal = NominalModel(1, 1, BOX1, BOX1, rbf_count=0)
    cost_model = CostModel(1, 1, BOX1, BOX1, rbf_count=0)
    report = fit_models(nominal, cost_model, ReplayBuffer(10), config,
                        np.random.default_rng(0))
    assert report.steps == 0


# ------------------------------------------------- [ checkpoints ... [
def test_checkpoint_restores_the_predictions(tmp_path):
    rng = np.random.default_rng(3)
    nominal = NominalModel(2, 1, BOX2, BOX1, rbf_count=6, rng_seed=1)
    cost_model = CostModel(2, 1, BOX2, BOX1, rbf_count=6, rng_seed=2)
    nominal.set_params(rng.normal(size=nominal.get_params().shape))
    cost_model.set_params(rng.normal(size=cost_model.get_params().shape))
    path = str(tmp_path / 'model.json')
    save_checkpoint(path, nominal, cost_model, meta={'seed': 4})
    n2, c2, meta = load_checkpoint(path)
    assert meta == {'seed': 4}
    x, u = [0.3, -0.2], [0.5]
    assert n2.predict(x, u).allclose(nominal.predict(x, u))
    assert c2.predict_cost(x, u) == pytest.approx(
        cost_model.predict_cost(x, u))


def test_checkpoint_keeps_the_angle_coordinates(tmp_path):
    nominal = NominalModel(2, 1, BOX2, BOX1, rbf_count=0, periodic=(0,))
    cost_model = CostModel(2, 1, BOX2, BOX1, rbf_count=0)
    path = str(tmp_path / 'model.json')
    save_checkpoint(path, nominal, cost_model)
    n2, c2, meta = load_checkpoint(path)
    assert n2.periodic == (0,)
    dic = nominal.as_dict()
    del dic['periodic']
    assert NominalModel.from_dict(dic).periodic == ()



def test_checkpoint_errors(tmp_path):
    path = tmp_path / 'bad.json'
    path.write_text('{"format": "something else", "version": 1}')
    with pytest.raises(CheckpointError):
        load_checkpoint(str(path))
    path.write_text('not json')
    with pytest.raises(CheckpointError):
        load_checkpoint(str(path))
    nominal = NominalModel(1, 1, BOX1, BOX1, rbf_count=0)
    cost_model = CostModel(1, 1, BOX1, BOX1, rbf_count=0)
    good = tmp_path / 'good.json'
    save_checkpoint(str(good), nominal, cost_model)
    data = json.loads(good.read_text())
    data['version'] = 99
    path.write_text(json.dumps(data))
    with pytest.raises(CheckpointError):
        load_checkpoint(str(path))
    data['version'] = 1
    data['nominal']['kind'] = 'cost'
    path.write_text(json.dumps(data))
    with pytest.raises(CheckpointError):
        load_checkpoint(str(path))
    with pytest.raises(CheckpointError):
        load_checkpoint(str(tmp_path / 'missing.json'))
# ------------------------------------------------- ] ... checkpoints ]
