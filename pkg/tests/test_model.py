import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import naive_conv3d
from radcube import nn
from radcube.errors import DivergenceDetected, ShapeMismatch
from radcube.model import (
    NetworkSpec,
    TrainConfig,
    backward,
    forward,
    init_weights,
    loss,
    loss_and_grads,
    train,
    zero_weights,
)

RTOL = 1e-4
EPS = 1e-5
SMALL = NetworkSpec(input_dims=(3, 8, 8, 8), widths=(2, 3), num_classes=2)


def rel_err(a, b):
    a, b = float(a), float(b)
    denom = max(abs(a), abs(b))
    return 0.0 if denom < 1e-10 else abs(a - b) / denom


def fd_check(f, x, analytic, rng, n=12):
    """Central differences on ``n`` random coordinates of ``x`` (modified in place)."""
    worst = 0.0
    for _ in range(n):
        idx = tuple(int(rng.integers(s)) for s in x.shape)
        old = x[idx]
        x[idx] = old + EPS
        fp = f()
        x[idx] = old - EPS
        fm = f()
        x[idx] = old
        worst = max(worst, rel_err((fp - fm) / (2 * EPS), analytic[idx]))
    return worst


def random_spec(seed):
    rng = np.random.default_rng(seed)
    stages = int(rng.integers(1, 3))
    side = 2**stages * int(rng.integers(1, 3))
    return NetworkSpec(
        input_dims=(int(rng.integers(1, 4)), side, side, side),
        widths=tuple(int(w) for w in rng.integers(1, 4, size=stages)),
        num_classes=int(rng.integers(1, 3)),
    )


# -- primitives ----------------------------------------------------------------


@pytest.mark.parametrize("k,stride", [(3, 1), (3, 2), (1, 1), (1, 2)])
def test_conv_matches_naive_loop(k, stride):
    rng = np.random.default_rng(k * 10 + stride)
    x = rng.standard_normal((2, 1, 6, 5, 4))
    w = rng.standard_normal((3, 2, k, k, k))
    b = rng.standard_normal(3)
    y, _ = nn.conv3d_forward(x, w, b, stride)
    np.testing.assert_allclose(y[:, 0], naive_conv3d(x[:, 0], w, b, stride), rtol=1e-12, atol=1e-12)


@pytest.mark.parametrize("k,stride", [(3, 1), (3, 2), (1, 1), (1, 2)])
def test_conv_gradients(k, stride):
    rng = np.random.default_rng(100 + k * 10 + stride)
    x = rng.standard_normal((2, 2, 4, 6, 4))
    w = rng.standard_normal((3, 2, k, k, k))
    b = rng.standard_normal(3)
    y, cache = nn.conv3d_forward(x, w, b, stride)
    g = rng.standard_normal(y.shape)

    def f():
        return float(np.sum(nn.conv3d_forward(x, w, b, stride)[0] * g))

    dx, dw, db = nn.conv3d_backward(g, cache)
    assert fd_check(f, x, dx, rng) < RTOL
    assert fd_check(f, w, dw, rng) < RTOL
    assert fd_check(f, b, db, rng, n=3) < RTOL


def test_upsample_gradient():
    rng = np.random.default_rng(1)
    x = rng.standard_normal((2, 1, 2, 3, 2))
    y, shape = nn.upsample2_forward(x)
    assert y.shape == (2, 1, 4, 6, 4)
    g = rng.standard_normal(y.shape)
    dx = nn.upsample2_backward(g, shape)
    assert fd_check(lambda: float(np.sum(nn.upsample2_forward(x)[0] * g)), x, dx, rng) < RTOL


def test_relu_gradient():
    rng = np.random.default_rng(2)
    x = rng.standard_normal((2, 1, 3, 3, 3))
    x[np.abs(x) < 1e-3] = 0.5  # keep finite differences off the kink
    y, mask = nn.relu_forward(x)
    g = rng.standard_normal(y.shape)
    dx = nn.relu_backward(g, mask)
    assert fd_check(lambda: float(np.sum(nn.relu_forward(x)[0] * g)), x, dx, rng) < RTOL


def test_sigmoid_gradient_and_stability():
    rng = np.random.default_rng(3)
    x = 4 * rng.standard_normal((2, 1, 3, 3, 3))
    y, cache = nn.sigmoid_forward(x)
    g = rng.standard_normal(y.shape)
    dx = nn.sigmoid_backward(g, cache)
    assert fd_check(lambda: float(np.sum(nn.sigmoid_forward(x)[0] * g)), x, dx, rng) < RTOL
    big, _ = nn.sigmoid_forward(np.array([-1e4, 0.0, 1e4]))
    np.testing.assert_array_equal(big, [0.0, 0.5, 1.0])


def test_mse_gradient():
    rng = np.random.default_rng(4)
    pred = rng.random((2, 2, 3, 3, 3))
    gt = rng.random(pred.shape)
    _, d = nn.mse_loss(pred, gt)
    assert fd_check(lambda: nn.mse_loss(pred, gt)[0], pred, d, rng) < RTOL


# -- network -------------------------------------------------------------------


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_network_gradients_match_finite_differences(seed):
    spec = random_spec(seed)
    rng = np.random.default_rng(seed)
    weights = init_weights(spec, seed=seed)
    for name in weights.params:
        if name.endswith(".b"):
            weights.params[name][:] = 0.1 * rng.standard_normal(weights.params[name].shape)
    x = rng.random((2,) + spec.input_dims)
    gt = rng.random((2,) + spec.output_dims)
    _, grads = loss_and_grads(x, gt, weights)
    for name, p in weights.params.items():
        err = fd_check(lambda: loss(forward(x, weights), gt), p, grads[name], rng, n=4)
        assert err < RTOL, name


def test_zero_weights_give_half():
    spec = NetworkSpec()
    out = forward(np.zeros(spec.input_dims), zero_weights(spec))
    assert out.shape == (2, 32, 16, 16)
    assert np.all(out == 0.5)


def test_forward_is_deterministic():
    w = init_weights(SMALL, seed=7)
    x = np.random.default_rng(0).random(SMALL.input_dims)
    assert np.array_equal(forward(x, w), forward(x, init_weights(SMALL, seed=7)))


def test_desk_scale_shapes():
    spec = NetworkSpec()
    w = init_weights(spec, seed=0, dtype=np.float32)
    out = forward(np.random.default_rng(0).random((2,) + spec.input_dims).astype(np.float32), w)
    assert out.shape == (2, 2, 32, 16, 16)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 50), st.floats(-1e6, 1e6))
def test_output_in_unit_interval_and_shape(seed, scale):
    spec = random_spec(seed)
    x = scale * np.random.default_rng(seed).standard_normal(spec.input_dims)
    out = forward(x, init_weights(spec, seed=seed))
    assert out.shape == spec.output_dims
    assert np.all((out >= 0) & (out <= 1))


def test_shape_mismatch():
    w = init_weights(SMALL)
    with pytest.raises(ShapeMismatch):
        forward(np.zeros((3, 8, 8, 4)), w)
    with pytest.raises(ShapeMismatch):
        loss(np.zeros((2, 4)), np.zeros((2, 5)))
    with pytest.raises(ValueError):
        NetworkSpec(input_dims=(3, 6, 8, 8), widths=(2, 3))


def test_loss_examples():
    gt = np.random.default_rng(0).random((2, 4, 4, 4))
    assert loss(gt, gt) == 0.0
    assert loss(gt + 0.1, gt) == pytest.approx(0.01)
    c = 0.3
    pred = gt.copy()
    pred[1] += c
    assert loss(pred, gt) == pytest.approx(c * c / 2)


def test_zero_gradient_at_minimum_for_head_bias():
    w = init_weights(SMALL, seed=1)
    x = np.random.default_rng(1).random(SMALL.input_dims)
    grads = backward(x, forward(x, w), w)
    assert np.all(grads["head.b"] == 0.0)


def test_gradient_scales_linearly_with_residual():
    w = init_weights(SMALL, seed=2)
    rng = np.random.default_rng(2)
    x = rng.random(SMALL.input_dims)
    pred = forward(x, w)
    residual = 0.1 * rng.standard_normal(pred.shape)
    g1 = backward(x, pred - residual, w)
    g3 = backward(x, pred - 3 * residual, w)
    for name in g1:
        np.testing.assert_allclose(g3[name], 3 * g1[name], rtol=1e-9, atol=1e-15)


# -- training ------------------------------------------------------------------


def _tiny_dataset(n, seed=0):
    rng = np.random.default_rng(seed)
    xs = rng.random((n,) + SMALL.input_dims)
    ys = np.zeros((n,) + SMALL.output_dims)
    for i in range(n):
        ys[i, i % 2, 4, 4, 4] = 1.0
        ys[i, i % 2, 4, 4, 5] = math.exp(-0.5)
    return xs, ys


def test_single_sample_memorisation():
    xs, ys = _tiny_dataset(1)
    cfg = TrainConfig(learning_rate=1e-2, optimizer="adam", epochs=150, batch_size=1, validation_split=0.0, dtype="float64")
    res = train((xs, ys), SMALL, cfg)
    assert res.history[-1]["train_loss"] < 1e-3


def test_same_seed_same_loss_curve():
    xs, ys = _tiny_dataset(6)
    cfg = TrainConfig(epochs=3, batch_size=2, seed=4)
    a = train((xs, ys), SMALL, cfg)
    b = train((xs, ys), SMALL, cfg)
    assert a.history == b.history
    for k in a.weights.params:
        assert np.array_equal(a.weights.params[k], b.weights.params[k])


def test_smoothed_training_loss_is_non_increasing():
    xs, ys = _tiny_dataset(8)
    cfg = TrainConfig(learning_rate=5e-2, momentum=0.9, epochs=30, batch_size=8, validation_split=0.0, dtype="float64")
    losses = [r["train_loss"] for r in train((xs, ys), SMALL, cfg).history]
    window = 5
    smooth = [np.mean(losses[i : i + window]) for i in range(0, len(losses) - window + 1, window)]
    assert all(b <= a for a, b in zip(smooth, smooth[1:])), smooth


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_is_detected():
    xs, ys = _tiny_dataset(2)
    # 1e300 overflows float32, so the very first forward pass is non-finite.
    xs = xs * 1e300
    with pytest.raises(DivergenceDetected):
        train((xs, ys), SMALL, TrainConfig(epochs=3, batch_size=2, validation_split=0.0, dtype="float32"))


def test_checkpoints_are_written(tmp_path):
    xs, ys = _tiny_dataset(2)
    train((xs, ys), SMALL, TrainConfig(epochs=2, batch_size=2, checkpoint_every=1, validation_split=0.0), checkpoint_dir=tmp_path)
    assert sorted(p.name for p in tmp_path.iterdir()) == ["epoch0001.cdnw", "epoch0002.cdnw"]


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(learning_rate=0)
    with pytest.raises(ValueError):
        TrainConfig(optimizer="rmsprop")


def test_sqrt_input_transform():
    x = np.random.default_rng(5).random(SMALL.input_dims)
    w = init_weights(SMALL, seed=5)
    plain = dataclasses.replace(SMALL, input_transform="none")
    w_plain = init_weights(plain, seed=5)
    np.testing.assert_allclose(forward(x, w), forward(np.sqrt(x), w_plain), rtol=1e-12)
    with pytest.raises(ValueError):
        NetworkSpec(input_transform="log")
