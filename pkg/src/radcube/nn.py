"""Minimal 3D convolution primitives with hand-written backward passes.

Activations are laid out (channels, batch, R, A, E): channel-major keeps
im2col/col2im to contiguous block copies with no transposes. Every ``*_forward``
returns ``(output, cache)`` and the matching ``*_backward`` takes the upstream
gradient plus that cache. Convolutions are 'same'-padded, odd kernels only.
"""

from __future__ import annotations

import itertools

import numpy as np


def conv3d_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray, stride: int = 1):
    cin, bsz, *spatial = x.shape
    cout, cin_w, k, k2, k3 = w.shape
    if cin != cin_w or not k == k2 == k3 or k % 2 == 0:
        raise ValueError(f"bad conv shapes: x {x.shape}, w {w.shape}")
    s = stride
    out_sp = tuple(-(-n // s) for n in spatial)
    ro, ao, eo = out_sp
    if k == 1:
        cols = x[:, :, ::s, ::s, ::s].reshape(cin, -1)
    else:
        pad = k // 2
        xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad), (pad, pad)))
        cols = np.empty((cin, k, k, k, bsz, ro, ao, eo), dtype=x.dtype)
        for i, j, l in itertools.product(range(k), repeat=3):
            cols[:, i, j, l] = xp[:, :, i : i + s * ro : s, j : j + s * ao : s, l : l + s * eo : s]
        cols = cols.reshape(cin * k**3, -1)
    y = w.reshape(cout, -1) @ cols + b[:, None]
    return y.reshape(cout, bsz, ro, ao, eo), (cols, x.shape, w, stride, out_sp)


def conv3d_backward(dy: np.ndarray, cache):
    cols, x_shape, w, s, out_sp = cache
    cin, bsz, *spatial = x_shape
    cout, _, k, _, _ = w.shape
    dy2 = dy.reshape(cout, -1)
    dw = (dy2 @ cols.T).reshape(w.shape)
    db = dy2.sum(axis=1)
    dcols = w.reshape(cout, -1).T @ dy2
    ro, ao, eo = out_sp
    if k == 1:
        dxs = dcols.reshape(cin, bsz, ro, ao, eo)
        if s == 1:
            return dxs, dw, db
        dx = np.zeros(x_shape, dtype=dy.dtype)
        dx[:, :, ::s, ::s, ::s] = dxs
        return dx, dw, db
    pad = k // 2
    dcols = dcols.reshape(cin, k, k, k, bsz, ro, ao, eo)
    dxp = np.zeros((cin, bsz) + tuple(n + 2 * pad for n in spatial), dtype=dy.dtype)
    for i, j, l in itertools.product(range(k), repeat=3):
        dxp[:, :, i : i + s * ro : s, j : j + s * ao : s, l : l + s * eo : s] += dcols[:, i, j, l]
    dx = dxp[:, :, pad : pad + spatial[0], pad : pad + spatial[1], pad : pad + spatial[2]]
    return np.ascontiguousarray(dx), dw, db


def upsample2_forward(x: np.ndarray):
    """Nearest-neighbour x2 upsampling of the three spatial axes."""
    y = x.repeat(2, axis=2).repeat(2, axis=3).repeat(2, axis=4)
    return y, x.shape


def upsample2_backward(dy: np.ndarray, x_shape):
    c, b, r, a, e = x_shape
    return dy.reshape(c, b, r, 2, a, 2, e, 2).sum(axis=(3, 5, 7))


def relu_forward(x: np.ndarray):
    mask = x > 0
    return x * mask, mask


def relu_backward(dy: np.ndarray, mask):
    return dy * mask


def sigmoid_forward(x: np.ndarray):
    # Split by sign so neither branch overflows.
    y = np.empty_like(x)
    pos = x >= 0
    y[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    y[~pos] = ex / (1.0 + ex)
    return y, y


def sigmoid_backward(dy: np.ndarray, y):
    return dy * y * (1.0 - y)


def mse_loss(pred: np.ndarray, gt: np.ndarray):
    """Class-averaged per-cube MSE, then averaged over the batch.

    All cubes share (C, R, A, E), so this equals the plain mean over every
    element. Returns (loss, d loss / d pred).
    """
    diff = pred - gt
    loss = float(np.mean(diff.astype(np.float64) ** 2))
    return loss, (2.0 / diff.size) * diff
