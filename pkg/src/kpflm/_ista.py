"""Compiled inner loop for the gamma sub-problem.

Minimizes ``0.5 g^T A g - b^T g + lam * ||g||_1`` by proximal-gradient steps of
size ``1/d``; ``A`` and ``b`` are the p-dimensional reduction of the smooth
part of the objective, so a step costs O(p^2).
"""
import numpy as np
from numba import njit


@njit(cache=True)
def _value(a, b, g, lam):
    return 0.5 * (g @ (a @ g)) - b @ g + lam * np.sum(np.abs(g))


@njit(cache=True)
def ista(a, b, gamma, lam, d, tol, max_steps):
    """Returns ``(gamma, steps)``; stops on ``max|step| < tol`` or when a step would not descend."""
    g = gamma.copy()
    f = _value(a, b, g, lam)
    thr = lam / d
    steps = 0
    for _ in range(max_steps):
        u = g - (a @ g - b) / d
        new = np.sign(u) * np.maximum(np.abs(u) - thr, 0.0)
        fn = _value(a, b, new, lam)
        if fn > f:
            break
        move = np.max(np.abs(new - g))
        g = new
        f = fn
        steps += 1
        if move < tol:
            break
    return g, steps
