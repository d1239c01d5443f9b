"""Independent reference computations: central finite differences on plain floats."""

import numpy as np

from gchs.expr import eval as feval


def value(f, x):
    return feval(f, np.asarray(x, dtype=float))


def grad(f, x, h=1e-5):
    x = np.asarray(x, dtype=float)
    out = np.empty(len(x))
    for a in range(len(x)):
        e = np.zeros_like(x)
        e[a] = h
        out[a] = (value(f, x + e) - value(f, x - e)) / (2 * h)
    return out


def hessian(f, x, h=1e-4):
    x = np.asarray(x, dtype=float)
    n = len(x)
    out = np.empty((n, n))
    for a in range(n):
        for b in range(n):
            ea = np.zeros(n)
            eb = np.zeros(n)
            ea[a] = h
            eb[b] = h
            out[a, b] = (
                value(f, x + ea + eb) - value(f, x + ea - eb) - value(f, x - ea + eb) + value(f, x - ea - eb)
            ) / (4 * h * h)
    return out


def directional(fun, x, d, h=1e-5):
    """Derivative of a callable R^n -> R^k along direction d."""
    x = np.asarray(x, dtype=float)
    d = np.asarray(d, dtype=float)
    return (np.asarray(fun(x + h * d)) - np.asarray(fun(x - h * d))) / (2 * h)


def jacobian(fun, x, h=1e-5):
    """Jacobian of a callable R^n -> R^k; columns index the coordinate."""
    x = np.asarray(x, dtype=float)
    cols = [directional(fun, x, np.eye(len(x))[a], h) for a in range(len(x))]
    return np.stack(cols, axis=-1)
