from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mtfgrasp.data import generate_synthetic
from mtfgrasp.model import (
    Hyperparams,
    LearnerSpec,
    evaluate,
    init_model,
    local_update,
    loss_and_grad,
)

from .conftest import client


def fd_grad(f, w, h=1e-5):
    """Central finite differences, one coordinate at a time."""
    g = np.zeros_like(w)
    for k in range(w.size):
        e = np.zeros_like(w)
        e[k] = h
        g[k] = (f(w + e) - f(w - e)) / (2 * h)
    return g


def test_param_counts():
    assert init_model(LearnerSpec("logistic", 4, 3), seed=7).shape == (15,)
    assert init_model(LearnerSpec("mlp", 4, 3, hidden_units=8), seed=7).shape == (67,)


def test_init_is_deterministic_and_bounded(mlp_spec):
    a, b = init_model(mlp_spec, 7), init_model(mlp_spec, 7)
    assert a.tobytes() == b.tobytes()
    assert np.all(np.abs(a) <= 0.1)
    # biases (b1 at 32:40, b2 at 64:67) start at zero
    assert not a[32:40].any() and not a[64:67].any()
    assert not np.array_equal(a, init_model(mlp_spec, 8))


@pytest.mark.parametrize("kwargs", [dict(input_dim=0, num_classes=3), dict(input_dim=4, num_classes=0)])
def test_invalid_spec(kwargs):
    with pytest.raises(ValueError):
        LearnerSpec("logistic", **kwargs)


def test_zero_params_give_log_m(lr_spec):
    rng = np.random.default_rng(0)
    X = rng.normal(size=(9, 4))
    y = rng.integers(0, 3, size=9)
    loss, _ = loss_and_grad(np.zeros(lr_spec.dim), lr_spec, X, y)
    assert loss == pytest.approx(math.log(3), abs=1e-15)


@pytest.mark.parametrize("kind", ["logistic", "mlp"])
def test_duplicated_sample_matches_single(kind):
    spec = LearnerSpec(kind, 4, 3, 8)
    rng = np.random.default_rng(1)
    w = rng.normal(size=spec.dim)
    x, y = rng.normal(size=(1, 4)), np.array([2])
    l1, g1 = loss_and_grad(w, spec, x, y)
    lk, gk = loss_and_grad(w, spec, np.repeat(x, 6, axis=0), np.repeat(y, 6))
    assert lk == pytest.approx(l1, rel=1e-14)
    np.testing.assert_allclose(gk, g1, rtol=1e-13, atol=1e-16)


@pytest.mark.parametrize("kind", ["logistic", "mlp"])
def test_gradient_matches_finite_differences(kind):
    spec = LearnerSpec(kind, 4, 3, 8)
    rng = np.random.default_rng(2)
    for _ in range(10):
        w = rng.normal(scale=0.5, size=spec.dim)
        X = rng.normal(size=(7, 4))
        y = rng.integers(0, 3, size=7)
        _, g = loss_and_grad(w, spec, X, y)
        num = fd_grad(lambda v: loss_and_grad(v, spec, X, y)[0], w)
        np.testing.assert_allclose(g, num, rtol=1e-4, atol=1e-8)


def test_loss_and_grad_errors(lr_spec):
    w = np.zeros(lr_spec.dim)
    with pytest.raises(ValueError, match="empty"):
        loss_and_grad(w, lr_spec, np.zeros((0, 4)), np.zeros(0, dtype=int))
    with pytest.raises(ValueError):
        loss_and_grad(w, lr_spec, np.zeros((2, 5)), np.zeros(2, dtype=int))
    with pytest.raises(ValueError):
        loss_and_grad(np.zeros(3), lr_spec, np.zeros((2, 4)), np.zeros(2, dtype=int))


@given(seed=st.integers(0, 10_000), kind=st.sampled_from(["logistic", "mlp"]))
@settings(max_examples=30, deadline=None)
def test_small_step_decreases_loss(seed, kind):
    spec = LearnerSpec(kind, 4, 3, 8)
    rng = np.random.default_rng(seed)
    w = rng.normal(scale=0.3, size=spec.dim)
    X = rng.normal(size=(12, 4))
    y = rng.integers(0, 3, size=12)
    loss, g = loss_and_grad(w, spec, X, y)
    # nondegenerate batch: any nonzero gradient admits a descent step
    eta = 1e-3 / max(1.0, float(np.linalg.norm(g)))
    assert loss_and_grad(w - eta * g, spec, X, y)[0] < loss


def _data(n=10, seed=3):
    rng = np.random.default_rng(seed)
    return client(0, rng.normal(size=(n, 4)), rng.integers(0, 3, size=n), 3)


def test_zero_epochs_is_identity(lr_spec):
    w = init_model(lr_spec, 1)
    out = local_update(w, lr_spec, _data(), 0, Hyperparams())
    assert out.tobytes() == w.tobytes()


def test_single_full_batch_epoch_is_one_sgd_step(lr_spec):
    data = _data()
    hp = Hyperparams(eta=0.1, batch_size=len(data.y))
    w = init_model(lr_spec, 1)
    _, g = loss_and_grad(w, lr_spec, data.X, data.y)
    np.testing.assert_allclose(local_update(w, lr_spec, data, 1, hp), w - 0.1 * g, rtol=0, atol=1e-14)


def test_two_full_batch_epochs_compose(mlp_spec):
    data = _data()
    hp = Hyperparams(eta=0.2, batch_size=64)
    w = init_model(mlp_spec, 4)
    w1 = w - 0.2 * loss_and_grad(w, mlp_spec, data.X, data.y)[1]
    w2 = w1 - 0.2 * loss_and_grad(w1, mlp_spec, data.X, data.y)[1]
    np.testing.assert_allclose(local_update(w, mlp_spec, data, 2, hp), w2, rtol=0, atol=1e-13)


def test_local_update_deterministic_and_round_dependent(lr_spec):
    data = _data(40)
    hp = Hyperparams(eta=0.1, batch_size=4, seed=11)
    w = init_model(lr_spec, 1)
    a = local_update(w, lr_spec, data, 3, hp, round_index=2)
    b = local_update(w, lr_spec, data, 3, hp, round_index=2)
    c = local_update(w, lr_spec, data, 3, hp, round_index=3)
    assert a.tobytes() == b.tobytes()
    assert not np.array_equal(a, c)


def test_local_update_rejects_empty(lr_spec):
    empty = client(3, np.zeros((0, 4)), [], 3)
    with pytest.raises(ValueError, match="robot 3"):
        local_update(np.zeros(lr_spec.dim), lr_spec, empty, 1, Hyperparams())
    with pytest.raises(ValueError):
        local_update(np.zeros(lr_spec.dim), lr_spec, _data(), -1, Hyperparams())


def test_uniform_model_breaks_ties_to_class_zero(lr_spec):
    X = np.random.default_rng(0).normal(size=(20, 4))
    assert evaluate(np.zeros(lr_spec.dim), lr_spec, X, np.zeros(20, dtype=int)) == 1.0
    assert evaluate(np.zeros(lr_spec.dim), lr_spec, X, np.ones(20, dtype=int)) == 0.0


def test_separable_toy_set_fits_perfectly():
    spec = LearnerSpec("logistic", 2, 2)
    X = np.array([[-2.0, 0.1], [-1.5, -0.3], [-3.0, 0.4], [1.7, 0.2], [2.5, -0.1], [1.2, 0.3]])
    y = np.array([0, 0, 0, 1, 1, 1])
    data = client(0, X, y, 2)
    w = local_update(init_model(spec, 0), spec, data, 200, Hyperparams(eta=0.5, batch_size=6))
    assert evaluate(w, spec, X, y) == 1.0


def test_random_labels_give_chance_accuracy():
    spec = LearnerSpec("logistic", 4, 2)
    g = generate_synthetic(2, 4, 2000, 3.0, seed=9)
    w = local_update(init_model(spec, 0), spec, client(0, g.X, g.y, 2), 1, Hyperparams(eta=0.1))
    labels = np.random.default_rng(4).integers(0, 2, size=len(g))
    # labels independent of the model: binomial(4000, 0.5) sd is under 0.01
    assert abs(evaluate(w, spec, g.X, labels) - 0.5) < 0.05


def test_evaluate_rejects_empty(lr_spec):
    with pytest.raises(ValueError):
        evaluate(np.zeros(lr_spec.dim), lr_spec, np.zeros((0, 4)), np.zeros(0))


def test_hyperparam_validation():
    with pytest.raises(ValueError):
        Hyperparams(e_r=0)
    with pytest.raises(ValueError):
        Hyperparams(e_t=-1)
    with pytest.raises(ValueError):
        Hyperparams(lambda_dds=0.0, lambda_dqs=0.0)
    with pytest.raises(ValueError):
        Hyperparams(eta=0.0)
