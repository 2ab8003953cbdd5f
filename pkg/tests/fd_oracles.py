"""Shared finite-difference oracles for gradient verification."""

import numpy as np


def fd_gradients(model, fn, step=1e-3):
    """Central finite differences of fn() w.r.t. every scalar parameter."""
    grads = {}
    for name, arr in model.arrays().items():
        g = np.zeros_like(arr)
        flat = arr.ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            hi = fn()
            flat[i] = orig - step
            lo = fn()
            flat[i] = orig
            g.ravel()[i] = (hi - lo) / (2 * step)
        grads[name] = g
    return grads


def max_rel_error(analytic, numeric):
    worst = 0.0
    for name in analytic:
        a = analytic[name]
        n = numeric[name]
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), 1e-3)
        worst = max(worst, float(np.max(np.abs(a - n) / denom)))
    return worst
