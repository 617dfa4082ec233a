"""Independent reference implementations used as test oracles.

These are deliberately naive: plain Python loops and exact fractions, no
reuse of package internals.
"""

from fractions import Fraction

import numpy as np


def template_oracle(stack, k=5):
    """Mean of all rows, rank every row by Euclidean distance, average the k nearest."""
    stack = np.asarray(stack, dtype=np.float64)
    n = stack.shape[0]
    flat = [row.ravel().tolist() for row in stack]
    size = len(flat[0])
    centre = [sum(flat[i][j] for i in range(n)) / n for j in range(size)]
    dist = []
    for i in range(n):
        d = sum((flat[i][j] - centre[j]) ** 2 for j in range(size)) ** 0.5
        dist.append((d, i))
    chosen = sorted(i for _, i in sorted(dist)[: min(k, n)])
    return np.mean(stack[chosen], axis=0)


def eer_sweep(genuine, impostor):
    """Exhaustive threshold sweep in exact arithmetic.

    Returns ``(far, frr, threshold)`` as fractions at the threshold minimizing
    ``|FAR - FRR|``, lowest threshold on ties. Accept if score >= threshold.
    """
    genuine, impostor = list(genuine), list(impostor)
    best = None
    for t in sorted(set(genuine) | set(impostor)):
        far = Fraction(sum(1 for s in impostor if s >= t), len(impostor))
        frr = Fraction(sum(1 for s in genuine if s < t), len(genuine))
        gap = abs(far - frr)
        if best is None or gap < best[0]:
            best = (gap, far, frr, t)
    return best[1], best[2], best[3]


def eer_oracle(genuine, impostor):
    far, frr, t = eer_sweep(genuine, impostor)
    return (far + frr) / 2, t


def eer_swapped(genuine, impostor):
    """EER with roles exchanged: impostors become the positive class, accepted if score <= t."""
    best = None
    for t in sorted(set(genuine) | set(impostor)):
        far = Fraction(sum(1 for s in genuine if s <= t), len(genuine))
        frr = Fraction(sum(1 for s in impostor if s > t), len(impostor))
        gap = abs(far - frr)
        if best is None or gap < best[0]:
            best = (gap, (far + frr) / 2)
    return best[1]
