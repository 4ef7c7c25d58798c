"""Shared oracles and fixtures."""

import numpy as np
import pytest


def central_diff(f, x, h=1e-5):
    """Central finite-difference gradient of a scalar function at x."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    for i in range(x.size):
        step = np.zeros_like(x)
        step.flat[i] = h
        grad.flat[i] = (f(x + step) - f(x - step)) / (2.0 * h)
    return grad


def max_rel_err(got, want):
    """Max component error, normalized by the largest reference component."""
    got = np.asarray(got, dtype=np.float64)
    want = np.asarray(want, dtype=np.float64)
    scale = max(float(np.max(np.abs(want))), 1e-12)
    return float(np.max(np.abs(got - want))) / scale


def type7_quantile(values, q):
    """Independent linear-interpolation quantile (for threshold checks)."""
    xs = sorted(float(v) for v in values)
    h = (len(xs) - 1) * q
    lo = int(np.floor(h))
    if lo + 1 >= len(xs):
        return xs[-1]
    return xs[lo] + (h - lo) * (xs[lo + 1] - xs[lo])


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240817)
