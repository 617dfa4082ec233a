"""Central finite-difference oracle for the analytic gradients."""

from __future__ import annotations

from typing import Callable, List, Sequence

import numpy as np

from .tensor import Tensor


def numerical_gradients(fn: Callable[..., Tensor], arrays: Sequence[np.ndarray], weights: np.ndarray,
                        h: float = 1e-3) -> List[np.ndarray]:
    """Gradient of ``sum(fn(*arrays) * weights)`` w.r.t. every array, by central differences."""
    arrays = [np.array(a, dtype=np.float64) for a in arrays]

    def scalar():
        out = fn(*[Tensor(a) for a in arrays]).data
        return float(np.sum(out * weights))

    grads = []
    for a in arrays:
        g = np.zeros_like(a)
        flat, gflat = a.reshape(-1), g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = scalar()
            flat[i] = orig - h
            down = scalar()
            flat[i] = orig
            gflat[i] = (up - down) / (2 * h)
        grads.append(g)
    return grads


def analytic_gradients(fn: Callable[..., Tensor], arrays: Sequence[np.ndarray],
                       weights: np.ndarray) -> List[np.ndarray]:
    tensors = [Tensor(np.array(a, dtype=np.float64), requires_grad=True) for a in arrays]
    out = fn(*tensors)
    out.backward(np.asarray(weights, dtype=np.float64).reshape(out.shape))
    return [t.grad if t.grad is not None else np.zeros_like(t.data) for t in tensors]


def max_relative_error(analytic: Sequence[np.ndarray], numeric: Sequence[np.ndarray],
                       floor: float = 1e-6) -> float:
    worst = 0.0
    for a, n in zip(analytic, numeric):
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
        worst = max(worst, float(np.max(np.abs(a - n) / denom)))
    return worst


def check_gradients(fn: Callable[..., Tensor], arrays: Sequence[np.ndarray], rng: np.random.Generator,
                    h: float = 1e-3) -> float:
    """Max relative error between analytic and finite-difference gradients (64-bit)."""
    out = fn(*[Tensor(np.array(a, dtype=np.float64)) for a in arrays])
    weights = rng.standard_normal(out.shape)
    return max_relative_error(
        analytic_gradients(fn, arrays, weights),
        numerical_gradients(fn, arrays, weights, h),
    )
