"""3D convolutional encoder-decoder mapping fused cubes to class confidence cubes.

Doppler bins become input channels of a 3D network over (R, A, E). Layout for
``widths = (w0, ..., w{S-1})``:

* encoder stage i: k^3 conv, stride 2, -> w_i, ReLU. Stage outputs are kept
  as skips; the raw input serves as the full-resolution skip.
* decoder stage i (i = S-1 .. 0): nearest x2 upsample, add a 1x1x1
  projection of the same-resolution skip, k^3 conv -> w_{i-1} (w_0 at the
  top), ReLU.
* head: 1x1x1 conv -> classes, sigmoid.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from radcube import nn
from radcube.errors import DivergenceDetected, ShapeMismatch

log = logging.getLogger(__name__)

WEIGHTS_VERSION = 1

# Fused cubes are products of two magnitudes, so their dynamic range is the
# square of a single radar's; the square root brings it back.
INPUT_TRANSFORMS = {"none": lambda x: x, "sqrt": lambda x: np.sqrt(np.maximum(x, 0))}


@dataclass(frozen=True)
class NetworkSpec:
    input_dims: tuple[int, int, int, int] = (16, 32, 16, 16)  # (D, R, A, E)
    widths: tuple[int, ...] = (16, 32, 64)
    kernel_size: int = 3
    skip_kernel_size: int = 1
    num_classes: int = 2
    head_bias_init: float = -4.0  # sigmoid(-4) ~ 0.018, close to the mostly-empty targets
    input_transform: str = "sqrt"  # "sqrt" or "none", applied elementwise before the first layer

    def __post_init__(self):
        object.__setattr__(self, "input_dims", tuple(int(d) for d in self.input_dims))
        object.__setattr__(self, "widths", tuple(int(w) for w in self.widths))
        if len(self.input_dims) != 4:
            raise ValueError("input_dims must be (D, R, A, E)")
        if not self.widths or min(self.widths) <= 0:
            raise ValueError("widths must be a non-empty list of positive channel counts")
        if self.input_transform not in INPUT_TRANSFORMS:
            raise ValueError(f"input_transform must be one of {sorted(INPUT_TRANSFORMS)}")
        if self.kernel_size % 2 == 0 or self.skip_kernel_size % 2 == 0:
            raise ValueError("kernel sizes must be odd")
        step = 2 ** len(self.widths)
        if any(n % step for n in self.input_dims[1:]):
            raise ValueError(f"spatial dims {self.input_dims[1:]} must be divisible by {step}")

    @property
    def stages(self) -> int:
        return len(self.widths)

    @property
    def output_dims(self) -> tuple[int, int, int, int]:
        return (self.num_classes,) + self.input_dims[1:]

    def layer_shapes(self) -> dict[str, tuple[int, ...]]:
        d = self.input_dims[0]
        k, ks = self.kernel_size, self.skip_kernel_size
        w = self.widths
        shapes = {}
        cin = d
        for i, cout in enumerate(w):
            shapes[f"enc{i}.w"] = (cout, cin, k, k, k)
            shapes[f"enc{i}.b"] = (cout,)
            cin = cout
        for i in reversed(range(self.stages)):
            skip_in = d if i == 0 else w[i - 1]
            out = w[i - 1] if i > 0 else w[0]
            shapes[f"skip{i}.w"] = (w[i], skip_in, ks, ks, ks)
            shapes[f"skip{i}.b"] = (w[i],)
            shapes[f"dec{i}.w"] = (out, w[i], k, k, k)
            shapes[f"dec{i}.b"] = (out,)
        shapes["head.w"] = (self.num_classes, w[0], 1, 1, 1)
        shapes["head.b"] = (self.num_classes,)
        return shapes

    def to_dict(self) -> dict:
        out = asdict(self)
        out["input_dims"] = list(self.input_dims)
        out["widths"] = list(self.widths)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "NetworkSpec":
        return cls(**data)


@dataclass
class Weights:
    spec: NetworkSpec
    params: dict[str, np.ndarray]
    seed: int = 0
    version: int = WEIGHTS_VERSION

    def __post_init__(self):
        expected = self.spec.layer_shapes()
        if set(expected) != set(self.params):
            raise ShapeMismatch(f"parameter names {sorted(self.params)} != {sorted(expected)}")
        for name, shape in expected.items():
            if tuple(self.params[name].shape) != shape:
                raise ShapeMismatch(f"{name}: {self.params[name].shape} != {shape}")

    def astype(self, dtype) -> "Weights":
        return Weights(self.spec, {k: v.astype(dtype) for k, v in self.params.items()}, self.seed, self.version)

    def copy(self) -> "Weights":
        return Weights(self.spec, {k: v.copy() for k, v in self.params.items()}, self.seed, self.version)


def init_weights(spec: NetworkSpec, seed: int = 0, dtype=np.float64) -> Weights:
    """He-style uniform init, limit sqrt(6 / fan_in); biases zero."""
    rng = np.random.default_rng(seed)
    params = {}
    for name, shape in spec.layer_shapes().items():
        if name.endswith(".w"):
            fan_in = int(np.prod(shape[1:]))
            lim = math.sqrt(6.0 / fan_in)
            params[name] = rng.uniform(-lim, lim, size=shape).astype(dtype)
        else:
            params[name] = np.zeros(shape, dtype=dtype)
    params["head.b"][:] = spec.head_bias_init
    return Weights(spec, params, seed=seed)


def zero_weights(spec: NetworkSpec, dtype=np.float64) -> Weights:
    return Weights(spec, {k: np.zeros(s, dtype=dtype) for k, s in spec.layer_shapes().items()})


def _as_batch(cube, spec: NetworkSpec) -> tuple[np.ndarray, bool]:
    x = np.asarray(getattr(cube, "data", cube))
    single = x.ndim == 4
    if single:
        x = x[None]
    if x.ndim != 5 or tuple(x.shape[1:]) != spec.input_dims:
        raise ShapeMismatch(f"input shape {x.shape} does not match spec {spec.input_dims}")
    return x, single


def _to_internal(x: np.ndarray, dtype, spec: NetworkSpec) -> np.ndarray:
    # (B, C, ...) public layout -> (C, B, ...) layer layout
    x = INPUT_TRANSFORMS[spec.input_transform](np.asarray(x, dtype=dtype))
    return np.ascontiguousarray(x.transpose(1, 0, 2, 3, 4), dtype=dtype)


def _from_internal(x: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(x.transpose(1, 0, 2, 3, 4))


def _forward(x: np.ndarray, weights: Weights):
    p, spec = weights.params, weights.spec
    s = spec.stages
    caches: dict = {}
    skips = [x]
    h = x
    for i in range(s):
        z, caches[f"enc{i}"] = nn.conv3d_forward(h, p[f"enc{i}.w"], p[f"enc{i}.b"], stride=2)
        h, caches[f"enc{i}.relu"] = nn.relu_forward(z)
        skips.append(h)
    for i in reversed(range(s)):
        u, caches[f"up{i}"] = nn.upsample2_forward(h)
        sk, caches[f"skip{i}"] = nn.conv3d_forward(skips[i], p[f"skip{i}.w"], p[f"skip{i}.b"])
        z, caches[f"dec{i}"] = nn.conv3d_forward(u + sk, p[f"dec{i}.w"], p[f"dec{i}.b"])
        h, caches[f"dec{i}.relu"] = nn.relu_forward(z)
    logits, caches["head"] = nn.conv3d_forward(h, p["head.w"], p["head.b"])
    out, caches["sigmoid"] = nn.sigmoid_forward(logits)
    return out, caches


def _backward(dout: np.ndarray, weights: Weights, caches: dict) -> dict[str, np.ndarray]:
    s = weights.spec.stages
    grads: dict[str, np.ndarray] = {}
    dlogits = nn.sigmoid_backward(dout, caches["sigmoid"])
    dh, grads["head.w"], grads["head.b"] = nn.conv3d_backward(dlogits, caches["head"])
    dskips = [None] * (s + 1)
    for i in range(s):
        dz = nn.relu_backward(dh, caches[f"dec{i}.relu"])
        dsum, grads[f"dec{i}.w"], grads[f"dec{i}.b"] = nn.conv3d_backward(dz, caches[f"dec{i}"])
        dskips[i], grads[f"skip{i}.w"], grads[f"skip{i}.b"] = nn.conv3d_backward(dsum, caches[f"skip{i}"])
        dh = nn.upsample2_backward(dsum, caches[f"up{i}"])
    # dh now flows into the deepest encoder output; walk the encoder back down.
    for i in reversed(range(s)):
        if i < s - 1:
            dh = dh + dskips[i + 1]
        dz = nn.relu_backward(dh, caches[f"enc{i}.relu"])
        dh, grads[f"enc{i}.w"], grads[f"enc{i}.b"] = nn.conv3d_backward(dz, caches[f"enc{i}"])
    return grads


def forward(cube, weights: Weights) -> np.ndarray:
    """Confidence cube (C, R, A, E) for one (D, R, A, E) cube, or a batch of them."""
    x, single = _as_batch(cube, weights.spec)
    out, _ = _forward(_to_internal(x, next(iter(weights.params.values())).dtype, weights.spec), weights)
    out = _from_internal(out)
    return out[0] if single else out


def loss(pred: np.ndarray, gt: np.ndarray) -> float:
    """Mean over classes of the per-class mean squared error (batch-averaged)."""
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    if pred.shape != gt.shape:
        raise ShapeMismatch(f"{pred.shape} != {gt.shape}")
    return nn.mse_loss(pred, gt)[0]


def loss_and_grads(cube, gt, weights: Weights) -> tuple[float, dict[str, np.ndarray]]:
    x, single = _as_batch(cube, weights.spec)
    gt = np.asarray(gt)
    if single:
        gt = gt[None]
    dtype = next(iter(weights.params.values())).dtype
    pred, caches = _forward(_to_internal(x, dtype, weights.spec), weights)
    pred = _from_internal(pred)
    if pred.shape != gt.shape:
        raise ShapeMismatch(f"ground truth {gt.shape} != prediction {pred.shape}")
    value, dpred = nn.mse_loss(pred, gt.astype(dtype, copy=False))
    return value, _backward(np.ascontiguousarray(dpred.transpose(1, 0, 2, 3, 4)), weights, caches)


def backward(cube, gt, weights: Weights) -> dict[str, np.ndarray]:
    """Gradient of :func:`loss` with respect to every parameter tensor."""
    return loss_and_grads(cube, gt, weights)[1]


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    momentum: float = 0.9
    batch_size: int = 8
    epochs: int = 40
    seed: int = 0
    validation_split: float = 0.1
    optimizer: str = "sgd"  # "sgd" (momentum) or "adam"
    dtype: str = "float32"
    checkpoint_every: int = 0  # epochs; 0 disables periodic checkpoints

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must be in [0, 1)")
        if self.batch_size < 1 or self.epochs < 1:
            raise ValueError("batch_size and epochs must be >= 1")
        if not 0 <= self.validation_split < 1:
            raise ValueError("validation_split must be in [0, 1)")
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.dtype not in ("float32", "float64"):
            raise ValueError("dtype must be float32 or float64")


@dataclass
class TrainResult:
    weights: Weights
    history: list[dict] = field(default_factory=list)  # per epoch: epoch, train_loss, val_loss


class _SGD:
    def __init__(self, params, lr, momentum):
        self.lr, self.mu = lr, momentum
        self.vel = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, params, grads):
        for k in params:
            self.vel[k] *= self.mu
            self.vel[k] -= self.lr * grads[k]
            params[k] += self.vel[k]


class _Adam:
    def __init__(self, params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        c1 = 1 - self.b1**self.t
        c2 = 1 - self.b2**self.t
        for k in params:
            g = grads[k]
            self.m[k] = self.b1 * self.m[k] + (1 - self.b1) * g
            self.v[k] = self.b2 * self.v[k] + (1 - self.b2) * g * g
            params[k] -= self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)


def split_indices(n: int, validation_split: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    perm = np.random.default_rng([seed, 1]).permutation(n)
    n_val = int(round(n * validation_split)) if n > 1 else 0
    return np.sort(perm[n_val:]), np.sort(perm[:n_val])


def train(
    dataset: Sequence[tuple[np.ndarray, np.ndarray]] | tuple[np.ndarray, np.ndarray],
    spec: NetworkSpec,
    train_cfg: TrainConfig = TrainConfig(),
    init: Weights | None = None,
    checkpoint_dir: str | Path | None = None,
    on_epoch: Callable[[dict], None] | None = None,
) -> TrainResult:
    """Mini-batch training on (fused cube, ground truth) pairs.

    ``dataset`` is either a list of pairs or a tuple ``(X, Y)`` with shapes
    (N, D, R, A, E) and (N, C, R, A, E). ``X`` may be any object supporting
    ``len`` and integer-array indexing, such as a lazily fused input stack.
    """
    if isinstance(dataset, tuple) and len(dataset) == 2 and getattr(dataset[0], "ndim", 0) == 5:
        xs, ys = dataset
    else:
        pairs = list(dataset)
        if not pairs:
            raise ValueError("empty dataset")
        xs = np.stack([np.asarray(getattr(x, "data", x)) for x, _ in pairs])
        ys = np.stack([np.asarray(y) for _, y in pairs])
    if len(xs) == 0:
        raise ValueError("empty dataset")
    dtype = np.dtype(train_cfg.dtype)
    if isinstance(xs, np.ndarray):
        xs = xs.astype(dtype, copy=False)
    ys = np.asarray(ys).astype(dtype, copy=False)
    _as_batch(xs[:1], spec)
    if tuple(ys.shape[1:]) != spec.output_dims:
        raise ShapeMismatch(f"labels {ys.shape[1:]} != {spec.output_dims}")

    weights = (init.copy() if init is not None else init_weights(spec, train_cfg.seed)).astype(dtype)
    params = weights.params
    if train_cfg.optimizer == "adam":
        opt = _Adam(params, train_cfg.learning_rate)
    else:
        opt = _SGD(params, train_cfg.learning_rate, train_cfg.momentum)
    train_idx, val_idx = split_indices(len(xs), train_cfg.validation_split, train_cfg.seed)
    rng = np.random.default_rng([train_cfg.seed, 2])
    history = []
    for epoch in range(1, train_cfg.epochs + 1):
        order = rng.permutation(train_idx)
        total, count = 0.0, 0
        for start in range(0, len(order), train_cfg.batch_size):
            idx = np.sort(order[start : start + train_cfg.batch_size])
            value, grads = loss_and_grads(xs[idx], ys[idx], weights)
            if not math.isfinite(value) or not all(np.all(np.isfinite(g)) for g in grads.values()):
                raise DivergenceDetected(f"non-finite loss/gradient at epoch {epoch}")
            opt.step(params, grads)
            total += value * len(idx)
            count += len(idx)
        record = {"epoch": epoch, "train_loss": total / count, "val_loss": None}
        if len(val_idx):
            record["val_loss"] = evaluate_loss(xs[val_idx], ys[val_idx], weights, train_cfg.batch_size)
        history.append(record)
        log.info("epoch %d train %.6g val %s", epoch, record["train_loss"], record["val_loss"])
        if on_epoch is not None:
            on_epoch(record)
        if checkpoint_dir is not None and train_cfg.checkpoint_every and epoch % train_cfg.checkpoint_every == 0:
            from radcube.store import write_weights

            Path(checkpoint_dir).mkdir(parents=True, exist_ok=True)
            write_weights(Path(checkpoint_dir) / f"epoch{epoch:04d}.cdnw", weights)
    return TrainResult(weights=weights, history=history)


def evaluate_loss(xs: np.ndarray, ys: np.ndarray, weights: Weights, batch_size: int = 8) -> float:
    total = 0.0
    for start in range(0, len(xs), batch_size):
        pred = forward(xs[start : start + batch_size], weights)
        total += loss(pred, ys[start : start + batch_size]) * len(pred)
    return total / len(xs)


def predict(xs: np.ndarray, weights: Weights, batch_size: int = 8) -> np.ndarray:
    outs = [forward(xs[s : s + batch_size], weights) for s in range(0, len(xs), batch_size)]
    return np.concatenate(outs) if outs else np.zeros((0,) + weights.spec.output_dims)
