"""Lazy pair arrays: a feature pool plus two index columns."""

from __future__ import annotations

import numpy as np

from ..errors import ShapeMismatch


class PairArray:
    """Behaves like a ``(n, 2, n_leads, 2, 25)`` array without materializing it.

    Row ``i`` is ``(pool[left[i]], pool[right[i]])``. Large protocol pair sets
    share a small pool of feature tensors, so this keeps memory bounded.
    """

    def __init__(self, pool: np.ndarray, left, right):
        self.pool = np.ascontiguousarray(pool, dtype=np.float32)
        self.left = np.asarray(left, dtype=np.int64)
        self.right = np.asarray(right, dtype=np.int64)
        if self.pool.ndim != 4:
            raise ShapeMismatch(f"pair pool must be (m, n_leads, 2, 25), got {self.pool.shape}")
        if self.left.shape != self.right.shape or self.left.ndim != 1:
            raise ShapeMismatch("left and right index columns must be 1-D and equally long")

    @property
    def n_leads(self) -> int:
        return self.pool.shape[1]

    @property
    def shape(self):
        return (len(self.left), 2) + self.pool.shape[1:]

    def __len__(self) -> int:
        return len(self.left)

    def side(self, which: int) -> "PairSide":
        return PairSide(self.pool, self.left if which == 0 else self.right)

    def __getitem__(self, idx):
        axis = 0 if np.ndim(self.left[idx]) == 0 else 1
        return np.stack([self.pool[self.left[idx]], self.pool[self.right[idx]]], axis=axis)

    def __array__(self, dtype=None, copy=None):
        out = self[:]
        return out if dtype is None else out.astype(dtype)


class PairSide:
    """One side of a :class:`PairArray`, flattened to ``(n, 2 * n_leads, 25)``."""

    def __init__(self, pool: np.ndarray, index: np.ndarray):
        self.pool = pool
        self.index = index

    def __len__(self) -> int:
        return len(self.index)

    def __getitem__(self, idx):
        block = self.pool[self.index[idx]]
        return block.reshape(block.shape[0], -1, block.shape[-1])


def pair_sides(X):
    """``(A, B)`` views of shape ``(n, 2l, 25)`` for an ndarray or :class:`PairArray`."""
    if isinstance(X, PairArray):
        return X.side(0), X.side(1)
    n, _, l, c, t = X.shape
    return X[:, 0].reshape(n, l * c, t), X[:, 1].reshape(n, l * c, t)
