"""Differentiable operations. Tensors are batched: ``(N, C, L)`` or ``(N, F)``."""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import BatchTooSmall, ShapeMismatch
from .tensor import Tensor, as_tensor

PROB_CLAMP = 1e-7
BN_EPS = 1e-5
BN_MOMENTUM = 0.9


def conv1d(x: Tensor, weight: Tensor, bias: Tensor | None = None, stride: int = 1, padding: int = 0) -> Tensor:
    """Cross-correlation of ``x`` ``(N, C_in, L)`` with ``weight`` ``(C_out, C_in, K)``."""
    if x.ndim != 3 or weight.ndim != 3 or x.shape[1] != weight.shape[1]:
        raise ShapeMismatch(f"conv1d input {x.shape} incompatible with kernel {weight.shape}")
    n, c_in, length = x.shape
    c_out, _, k = weight.shape
    out_len = (length + 2 * padding - k) // stride + 1
    if out_len < 1:
        raise ShapeMismatch(f"conv1d kernel {k} longer than padded input {length + 2 * padding}")
    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding))) if padding else x.data
    # (N, C_in, L', K) -> (N, L', C_in, K) -> (N*L', C_in*K)
    windows = sliding_window_view(xp, k, axis=2)[:, :, ::stride, :]
    cols = np.ascontiguousarray(windows.transpose(0, 2, 1, 3)).reshape(n * out_len, c_in * k)
    w2 = weight.data.reshape(c_out, c_in * k)
    out = cols @ w2.T
    if bias is not None:
        out += bias.data
    out = out.reshape(n, out_len, c_out).transpose(0, 2, 1)

    def backward(g):
        g2 = g.transpose(0, 2, 1).reshape(n * out_len, c_out)
        gw = (g2.T @ cols).reshape(weight.shape) if weight.requires_grad else None
        gb = g2.sum(axis=0) if bias is not None and bias.requires_grad else None
        gx = None
        if x.requires_grad:
            gcols = (g2 @ w2).reshape(n, out_len, c_in, k)
            gxp = np.zeros_like(xp)
            span = stride * (out_len - 1) + 1
            for j in range(k):
                gxp[:, :, j : j + span : stride] += gcols[:, :, :, j].transpose(0, 2, 1)
            gx = gxp[:, :, padding : padding + length] if padding else gxp
        return gx, gw, gb

    parents = (x, weight) if bias is None else (x, weight, bias)
    return Tensor.from_op(np.ascontiguousarray(out), parents, backward)


def batch_norm(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    training: bool,
    momentum: float = BN_MOMENTUM,
    eps: float = BN_EPS,
) -> Tensor:
    """Per-channel batch normalization over ``(N, L)`` (3-D input) or ``N`` (2-D).

    In training mode the running statistics are updated in place as
    ``running = momentum * running + (1 - momentum) * batch``.
    """
    if x.ndim not in (2, 3) or x.shape[1] != gamma.shape[0]:
        raise ShapeMismatch(f"batch_norm input {x.shape} incompatible with {gamma.shape[0]} channels")
    axes = (0, 2) if x.ndim == 3 else (0,)
    view = (1, -1, 1) if x.ndim == 3 else (1, -1)
    data = x.data
    if training:
        if x.shape[0] < 2:
            raise BatchTooSmall(f"training-mode batch norm needs a batch of at least 2, got {x.shape[0]}")
        mean = data.mean(axis=axes, dtype=np.float64)
        var = data.var(axis=axes, dtype=np.float64)
        running_mean *= momentum
        running_mean += (1 - momentum) * mean.astype(running_mean.dtype)
        running_var *= momentum
        running_var += (1 - momentum) * var.astype(running_var.dtype)
        mean, var = mean.astype(data.dtype), var.astype(data.dtype)
    else:
        mean, var = running_mean.astype(data.dtype), running_var.astype(data.dtype)
    inv_std = (1.0 / np.sqrt(var + eps)).astype(data.dtype)
    xhat = (data - mean.reshape(view)) * inv_std.reshape(view)
    out = xhat * gamma.data.reshape(view) + beta.data.reshape(view)
    m = data.size // data.shape[1]

    def backward(g):
        ggamma = (g * xhat).sum(axis=axes) if gamma.requires_grad else None
        gbeta = g.sum(axis=axes) if beta.requires_grad else None
        gx = None
        if x.requires_grad:
            gxhat = g * gamma.data.reshape(view)
            if training:
                s1 = gxhat.sum(axis=axes).reshape(view)
                s2 = (gxhat * xhat).sum(axis=axes).reshape(view)
                gx = inv_std.reshape(view) / m * (m * gxhat - s1 - xhat * s2)
            else:
                gx = gxhat * inv_std.reshape(view)
        return gx, ggamma, gbeta

    return Tensor.from_op(out, (x, gamma, beta), backward)


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return Tensor.from_op(np.where(mask, x.data, 0).astype(x.dtype), (x,), lambda g: (g * mask,))


def max_pool1d(x: Tensor, width: int = 2) -> Tensor:
    """Non-overlapping max pooling along the last axis; length is floored."""
    n, c, length = x.shape
    out_len = length // width
    if out_len < 1:
        raise ShapeMismatch(f"cannot pool length {length} by {width}")
    blocks = x.data[:, :, : out_len * width].reshape(n, c, out_len, width)
    arg = blocks.argmax(axis=3)
    out = np.take_along_axis(blocks, arg[..., np.newaxis], axis=3)[..., 0]

    def backward(g):
        gb = np.zeros((n, c, out_len, width), dtype=g.dtype)
        np.put_along_axis(gb, arg[..., np.newaxis], g[..., np.newaxis], axis=3)
        gx = np.zeros(x.shape, dtype=g.dtype)
        gx[:, :, : out_len * width] = gb.reshape(n, c, out_len * width)
        return (gx,)

    return Tensor.from_op(out, (x,), backward)


def upsample_nearest(x: Tensor, factor: int = 2) -> Tensor:
    n, c, length = x.shape
    out = np.repeat(x.data, factor, axis=2)
    return Tensor.from_op(out, (x,), lambda g: (g.reshape(n, c, length, factor).sum(axis=3),))


def dense(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """``y = x W^T + b`` with ``x`` ``(N, F_in)`` and ``weight`` ``(F_out, F_in)``."""
    if x.ndim != 2 or x.shape[1] != weight.shape[1]:
        raise ShapeMismatch(f"dense input {x.shape} incompatible with weight {weight.shape}")
    out = x.data @ weight.data.T
    if bias is not None:
        out = out + bias.data

    def backward(g):
        gx = g @ weight.data if x.requires_grad else None
        gw = g.T @ x.data if weight.requires_grad else None
        gb = g.sum(axis=0) if bias is not None and bias.requires_grad else None
        return gx, gw, gb

    parents = (x, weight) if bias is None else (x, weight, bias)
    return Tensor.from_op(out, parents, backward)


def sigmoid(x: Tensor) -> Tensor:
    z = x.data
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    result = Tensor.from_op(out, (x,), lambda g: (g * out * (1 - out),))
    result.activation = ("sigmoid", x)
    return result


def softmax(x: Tensor) -> Tensor:
    """Softmax over the last axis."""
    z = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        return (out * (g - (g * out).sum(axis=-1, keepdims=True)),)

    result = Tensor.from_op(out, (x,), backward)
    result.activation = ("softmax", x)
    return result


def flatten(x: Tensor) -> Tensor:
    return x.reshape(x.shape[0], -1)


def concat(tensors, axis: int = 0) -> Tensor:
    sizes = [t.shape[axis] for t in tensors]
    bounds = np.cumsum(sizes)[:-1]
    out = np.concatenate([t.data for t in tensors], axis=axis)
    return Tensor.from_op(out, tuple(tensors), lambda g: tuple(np.split(g, bounds, axis=axis)))


def take(x: Tensor, start: int, stop: int) -> Tensor:
    """Rows ``start:stop`` along axis 0."""
    shape = x.shape

    def backward(g):
        full = np.zeros(shape, dtype=g.dtype)
        full[start:stop] = g
        return (full,)

    return Tensor.from_op(x.data[start:stop], (x,), backward)


def squared_difference(a: Tensor, b: Tensor) -> Tensor:
    """Element-wise ``(a - b)**2``; symmetric in its arguments bit-for-bit."""
    if a.shape != b.shape:
        raise ShapeMismatch(f"squared_difference shapes {a.shape} and {b.shape} differ")
    d = a.data - b.data
    return Tensor.from_op(d * d, (a, b), lambda g: (2 * d * g, -2 * d * g))


# ------------------------------------------------------------------ losses

def _check_pair(pred: Tensor, target) -> np.ndarray:
    target = np.asarray(target.data if isinstance(target, Tensor) else target, dtype=pred.dtype)
    if target.shape != pred.shape:
        raise ShapeMismatch(f"prediction {pred.shape} and target {target.shape} differ")
    return target


def mse_loss(pred: Tensor, target) -> Tensor:
    target = _check_pair(pred, target)
    diff = pred.data - target
    value = np.mean(diff.astype(np.float64) ** 2).astype(pred.dtype)
    scale = 2.0 / diff.size
    return Tensor.from_op(np.asarray(value), (pred,), lambda g: (g * scale * diff,))


def _clamped(p: np.ndarray):
    clipped = np.clip(p, PROB_CLAMP, 1 - PROB_CLAMP)
    inside = (p >= PROB_CLAMP) & (p <= 1 - PROB_CLAMP)
    return clipped, inside


def _fused(pred: Tensor, activation: str, value, y, n):
    """Cross-entropy straight on the logits of ``activation``: gradient ``(p - y) / n``.

    This is the derivative of the unclamped loss; unlike the chain through the
    clamp it does not vanish for confidently wrong predictions.
    """
    if pred.activation is None or pred.activation[0] != activation:
        return None
    logits = pred.activation[1]
    residual = (pred.data - y) / n
    return Tensor.from_op(value, (logits,), lambda g: (g * residual,))


def binary_cross_entropy(pred: Tensor, target) -> Tensor:
    """Mean of ``-(y log p + (1-y) log(1-p))``, probabilities clamped to [1e-7, 1-1e-7]."""
    y = _check_pair(pred, target)
    p, inside = _clamped(pred.data)
    terms = -(y * np.log(p.astype(np.float64)) + (1 - y) * np.log1p(-p.astype(np.float64)))
    value = np.asarray(terms.mean(), dtype=pred.dtype)
    n = p.size
    fused = _fused(pred, "sigmoid", value, y, n)
    if fused is not None:
        return fused

    def backward(g):
        grad = (p - y) / (p * (1 - p)) / n
        return (g * grad * inside,)

    return Tensor.from_op(value, (pred,), backward)


def categorical_cross_entropy(pred: Tensor, target) -> Tensor:
    """Mean over the batch of ``-sum_k y_k log p_k`` (one-hot ``target``)."""
    y = _check_pair(pred, target)
    p, inside = _clamped(pred.data)
    per_row = -(y * np.log(p.astype(np.float64))).sum(axis=-1)
    value = np.asarray(per_row.mean(), dtype=pred.dtype)
    n = per_row.size
    fused = _fused(pred, "softmax", value, y, n)
    if fused is not None:
        return fused

    def backward(g):
        return (g * (-y / p) / n * inside,)

    return Tensor.from_op(value, (pred,), backward)


LOSSES = {
    "mse": mse_loss,
    "bce": binary_cross_entropy,
    "cce": categorical_cross_entropy,
}


def loss(pred: Tensor, target, kind: str) -> Tensor:
    try:
        fn = LOSSES[kind.lower()]
    except KeyError:
        raise ValueError(f"unknown loss {kind!r}; choose from {sorted(LOSSES)}") from None
    return fn(as_tensor(pred), target)
