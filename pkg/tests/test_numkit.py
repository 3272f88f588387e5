import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bgmil.numkit import (
    Adam,
    AdamState,
    DenseLayer,
    Rng,
    Tensor,
    TrainingConfig,
    adam_update,
    cross_entropy,
    dense_forward,
    dropout_apply,
    glorot_uniform,
    grad_check,
    loss_cross_entropy,
    loss_mse,
    mse,
    parameter,
)
from bgmil.numkit import tensor as T

SEEDS = range(20)


def layer(w, b, act="identity"):
    return DenseLayer(parameter(np.asarray(w, float)), parameter(np.asarray(b, float)), act)


# -- dense_forward ---------------------------------------------------------------
def test_dense_identity_relu():
    out = dense_forward(layer(np.eye(2), [0, 0], "relu"), np.array([[-1.0, 2.0]]))
    np.testing.assert_array_equal(out.data, [[0.0, 2.0]])


def test_dense_zero_input_zero_bias():
    lay = DenseLayer.init(3, 4, Rng(0), "tanh")
    np.testing.assert_array_equal(lay(np.zeros((2, 3))).data, np.zeros((2, 4)))


def test_dense_hand_matmul():
    out = dense_forward(layer([[1.0], [2.0]], [0.5]), np.array([[1.0, 1.0]]))
    np.testing.assert_allclose(out.data, [[3.5]])


def test_dense_dim_mismatch():
    with pytest.raises(ValueError, match="columns"):
        dense_forward(DenseLayer.init(3, 2, Rng(0)), np.zeros((1, 4)))


def test_dense_inconsistent_bias():
    with pytest.raises(ValueError):
        layer(np.zeros((2, 3)), np.zeros(2))


def test_unknown_activation():
    with pytest.raises(ValueError, match="activation"):
        layer(np.eye(2), [0, 0], "swish")


def test_glorot_bounds():
    w = glorot_uniform(30, 20, Rng(1))
    assert np.abs(w).max() <= math.sqrt(6 / 50)
    assert w.shape == (30, 20)


# -- dropout ---------------------------------------------------------------------
def test_dropout_rate_zero_is_identity():
    x = np.arange(6.0).reshape(2, 3)
    assert dropout_apply(x, 0.0, Rng(0), True) is x


def test_dropout_eval_mode_is_identity():
    x = np.arange(6.0).reshape(2, 3)
    assert dropout_apply(x, 0.5, None, False) is x


def test_dropout_reproducible():
    x = np.ones((4, 5))
    a = dropout_apply(x, 0.5, Rng(3, 1), True)
    b = dropout_apply(x, 0.5, Rng(3, 1), True)
    np.testing.assert_array_equal(a, b)
    assert set(np.unique(a)) <= {0.0, 2.0}


def test_dropout_unbiased():
    stream = Rng(0)
    draws = dropout_apply(np.ones((100_000, 1)), 0.5, stream, True)
    assert abs(draws.mean() - 1.0) < 0.02


@pytest.mark.parametrize("rate", [1.0, 1.5, -0.1])
def test_dropout_bad_rate(rate):
    with pytest.raises(ValueError):
        dropout_apply(np.ones(3), rate, Rng(0), True)


# -- Adam ------------------------------------------------------------------------
def test_adam_first_step():
    theta = [np.array([0.0])]
    new, _ = adam_update(theta, [np.array([1.0])], AdamState(), TrainingConfig(learning_rate=0.1))
    assert new[0][0] == pytest.approx(-0.1, abs=1e-6)


def test_adam_zero_grad_no_move():
    theta = [np.array([1.5, -2.0])]
    new, _ = adam_update(theta, [np.zeros(2)], AdamState(), TrainingConfig(learning_rate=0.1))
    np.testing.assert_array_equal(new[0], theta[0])


def test_adam_decreases_quadratic():
    cfg = TrainingConfig(learning_rate=0.1)
    theta, state = [np.array([1.0])], AdamState()
    values = [1.0]
    for _ in range(2):
        theta, state = adam_update(theta, [2 * theta[0]], state, cfg)
        values.append(float(theta[0][0] ** 2))
    assert values[0] > values[1] > values[2]


def test_adam_weight_decay_enters_gradient():
    # g = 0 but wd * theta pushes the parameter toward zero
    new, _ = adam_update([np.array([2.0])], [np.zeros(1)], AdamState(), TrainingConfig(learning_rate=0.1, weight_decay=0.5))
    assert new[0][0] == pytest.approx(1.9, abs=1e-6)


def test_adam_shape_mismatch():
    with pytest.raises(ValueError):
        adam_update([np.zeros(2)], [np.zeros(3)], AdamState(), TrainingConfig())


def test_adam_deterministic():
    cfg = TrainingConfig(learning_rate=0.01, weight_decay=0.1)
    args = ([np.array([0.3, -1.0])], [np.array([0.2, 0.7])])
    a, _ = adam_update(*args, AdamState(), cfg)
    b, _ = adam_update(*args, AdamState(), cfg)
    np.testing.assert_array_equal(a[0], b[0])


def test_adam_wrapper_matches_functional():
    cfg = TrainingConfig(learning_rate=0.05)
    p = parameter(np.array([1.0, 2.0]))
    opt = Adam([p], cfg)
    p.grad = np.array([0.5, -0.5])
    opt.step()
    ref, _ = adam_update([np.array([1.0, 2.0])], [np.array([0.5, -0.5])], AdamState(), cfg)
    np.testing.assert_array_equal(p.data, ref[0])


@pytest.mark.parametrize(
    "kwargs",
    [dict(learning_rate=0), dict(weight_decay=-1), dict(epochs=0), dict(loss="hinge")],
)
def test_training_config_validation(kwargs):
    with pytest.raises(ValueError):
        TrainingConfig(**kwargs)


# -- losses ----------------------------------------------------------------------
def test_ce_uniform():
    loss, _ = loss_cross_entropy(np.zeros((1, 2)), [0])
    assert loss == pytest.approx(math.log(2))


def test_ce_no_overflow():
    loss, grad = loss_cross_entropy(np.array([[1e6, 0.0]]), [0])
    assert loss == pytest.approx(0.0, abs=1e-12)
    assert np.all(np.isfinite(grad))


def test_ce_label_out_of_range():
    with pytest.raises(ValueError):
        loss_cross_entropy(np.zeros((2, 3)), [0, 3])


def fd_grad(f, x, h=1e-6):
    g = np.zeros_like(x)
    for i in np.ndindex(x.shape):
        up, down = x.copy(), x.copy()
        up[i] += h
        down[i] -= h
        g[i] = (f(up) - f(down)) / (2 * h)
    return g


@pytest.mark.parametrize("seed", SEEDS)
def test_ce_grad_matches_fd(seed):
    rng = Rng(seed)
    logits = rng.normal(size=(4, 3))
    labels = rng.integers(0, 3, size=4)
    _, grad = loss_cross_entropy(logits, labels)
    num = fd_grad(lambda z: loss_cross_entropy(z, labels)[0], logits)
    assert np.max(np.abs(grad - num) / np.maximum(1, np.abs(grad))) < 1e-6


@pytest.mark.parametrize("seed", SEEDS)
def test_mse_grad_matches_fd(seed):
    rng = Rng(seed)
    pred, target = rng.normal(size=(5, 2)), rng.normal(size=(5, 2))
    _, grad = loss_mse(pred, target)
    np.testing.assert_allclose(grad, 2 * (pred - target) / pred.size)
    num = fd_grad(lambda p: loss_mse(p, target)[0], pred)
    assert np.max(np.abs(grad - num) / np.maximum(1, np.abs(grad))) < 1e-6


def test_mse_values():
    assert loss_mse(np.array([[1.0]]), np.array([[0.0]]))[0] == 1.0
    assert loss_mse(np.ones((2, 2)), np.ones((2, 2)))[0] == 0.0
    with pytest.raises(ValueError):
        loss_mse(np.ones(3), np.ones(4))


@given(st.floats(-1e3, 1e3), st.integers(0, 2**31 - 1))
def test_ce_shift_invariance(c, seed):
    logits = Rng(seed).normal(size=(3, 4))
    labels = [0, 3, 1]
    assert loss_cross_entropy(logits + c, labels)[0] == pytest.approx(loss_cross_entropy(logits, labels)[0], abs=1e-9)


@pytest.mark.parametrize("seed", SEEDS)
def test_tensor_losses_match_functional(seed):
    rng = Rng(seed)
    z = rng.normal(size=(4, 3))
    y = rng.integers(0, 3, size=4)
    p = parameter(z.copy())
    loss = cross_entropy(p, y)
    loss.backward()
    ref, grad = loss_cross_entropy(z, y)
    assert float(loss.data) == pytest.approx(ref, abs=1e-12)
    np.testing.assert_allclose(p.grad, grad, atol=1e-12)


# -- gradient checker ------------------------------------------------------------
@pytest.mark.parametrize("seed", SEEDS)
def test_gradcheck_dense_mse(seed):
    rng = Rng(seed)
    lay = DenseLayer.init(3, 2, rng.child(0), "tanh")
    x, y = rng.normal(size=(5, 3)), rng.normal(size=(5, 2))
    assert grad_check(lambda: mse(lay(x), y), lay.parameters()) < 1e-5


@pytest.mark.parametrize("act", ["relu", "elu", "tanh", "identity"])
def test_gradcheck_activations(act):
    rng = Rng(7)
    # keep pre-activations away from the relu/elu kink
    lay = DenseLayer.init(2, 3, rng.child(0), act)
    x = rng.normal(size=(4, 2))
    assert grad_check(lambda: (lay(x) * lay(x)).sum(), lay.parameters()) < 1e-4


def test_gradcheck_detects_corruption():
    p = parameter(np.array([1.0, 2.0]))
    # value of sum(p^2) paired with a gradient that is 50% too large
    assert grad_check(lambda: T.custom_loss(float((p.data**2).sum()), 3.0 * p.data, p), [p]) > 1e-2


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_gradcheck_nonfinite():
    p = parameter(np.array([0.0]))
    with pytest.raises(FloatingPointError):
        grad_check(lambda: T.log(p).sum(), [p])


# -- tensor ops -----------------------------------------------------------------
@pytest.mark.parametrize("seed", SEEDS)
def test_tensor_ops_gradients(seed):
    rng = Rng(seed)
    a = parameter(rng.normal(size=(2, 3, 4)))
    b = parameter(rng.normal(size=(4, 2)))
    c = parameter(rng.uniform(0.5, 2.0, size=(3, 1)))

    def f():
        h = T.softmax(a @ b, axis=-1) * T.sqrt(c) / (c + 1.0)
        h = T.concat([h, T.exp(h) - 1.0], axis=-1)
        h = T.layer_norm(h, parameter(np.ones(4)), parameter(np.zeros(4)))
        return (h.swapaxes(0, 1).reshape(3, -1).max(axis=1) ** 2).mean() + T.log(c).sum()

    assert grad_check(f, [a, b, c]) < 1e-4


@pytest.mark.parametrize("mode", ["mean", "sum", "max"])
def test_segment_pool_gradients(mode):
    rng = Rng(2)
    x = parameter(rng.normal(size=(7, 3)))
    offsets = np.array([0, 2, 3, 7])
    assert grad_check(lambda: (T.segment_pool(x, offsets, mode) ** 2).sum(), [x]) < 1e-4


def test_segment_pool_max_tie_goes_to_lowest_index():
    x = parameter(np.array([[1.0], [1.0], [0.0]]))
    T.segment_pool(x, np.array([0, 3]), "max").sum().backward()
    np.testing.assert_array_equal(x.grad, [[1.0], [0.0], [0.0]])


def test_segment_pool_empty_bag():
    with pytest.raises(ValueError):
        T.segment_pool(Tensor(np.zeros((2, 1))), np.array([0, 2, 2]), "mean")


# -- rng -------------------------------------------------------------------------
def test_rng_streams_reproducible_and_independent():
    a = Rng(5, (1, 2)).normal(size=4)
    np.testing.assert_array_equal(a, Rng(5, (1, 2)).normal(size=4))
    assert not np.array_equal(a, Rng(5, (1, 3)).normal(size=4))
    np.testing.assert_array_equal(Rng(5, 1).child(2).normal(size=4), a)


def test_rng_child_ignores_parent_state():
    r = Rng(9)
    before = r.child(4).random(3)
    r.random(100)
    np.testing.assert_array_equal(before, r.child(4).random(3))
