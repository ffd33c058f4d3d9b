"""Closed-form test functions for the benchmarks, all defined on ``[0, 1]^d``."""
from __future__ import annotations

import numpy as np

from .errors import ArgumentError


def _cols(x, d=None):
    x = np.asarray(x, dtype=float)
    x2 = np.atleast_2d(x)
    if d is not None and x2.shape[1] != d:
        raise ArgumentError(f"expected points of dimension {d}, got {x2.shape[1]}")
    return x2, x.ndim == 1


def _finish(v, scalar):
    return float(v[0]) if scalar else v


def franke(x):
    """Franke's function with the second term's sign pattern exactly as printed.

    The second Gaussian bump is ``3/4 exp{-((9x+1)^2/49 - (9y+1)^2/10)}``,
    which grows towards ``y = 1`` (about 1.65e4 at ``(0, 1)``).  The classic
    variant is available as :func:`franke_classic`.
    """
    X, scalar = _cols(x, 2)
    a, b = 9 * X[:, 0], 9 * X[:, 1]
    v = (0.75 * np.exp(-((a - 2) ** 2 + (b - 2) ** 2) / 4)
         + 0.75 * np.exp(-((a + 1) ** 2 / 49 - (b + 1) ** 2 / 10))
         + 0.5 * np.exp(-((a - 7) ** 2 + (b - 3) ** 2) / 4)
         - 0.2 * np.exp(-((a - 4) ** 2 + (b - 7) ** 2)))
    return _finish(v, scalar)


def franke_classic(x):
    """The textbook Franke function (second term ``exp{-(9x+1)^2/49 - (9y+1)/10}``)."""
    X, scalar = _cols(x, 2)
    a, b = 9 * X[:, 0], 9 * X[:, 1]
    v = (0.75 * np.exp(-((a - 2) ** 2 + (b - 2) ** 2) / 4)
         + 0.75 * np.exp(-(a + 1) ** 2 / 49 - (b + 1) / 10)
         + 0.5 * np.exp(-((a - 7) ** 2 + (b - 3) ** 2) / 4)
         - 0.2 * np.exp(-((a - 4) ** 2 + (b - 7) ** 2)))
    return _finish(v, scalar)


def michalewicz2d(x):
    """``sin(pi x) sin^20(pi x^2) + sin(pi y) sin^20(2 pi y^2)``."""
    X, scalar = _cols(x, 2)
    s, t = X[:, 0], X[:, 1]
    v = np.sin(np.pi * s) * np.sin(np.pi * s**2) ** 20 + np.sin(np.pi * t) * np.sin(2 * np.pi * t**2) ** 20
    return _finish(v, scalar)


def schwefel(x):
    """``-sum_j z_j sin(sqrt|z_j|) / 1000`` with ``z_j = 1000 x_j - 500``, any dimension."""
    X, scalar = _cols(x)
    z = 1000.0 * X - 500.0
    v = -np.sum(z * np.sin(np.sqrt(np.abs(z))), axis=1) / 1000.0
    return _finish(v, scalar)


def oscillatory1d(x):
    """``exp{(x+1/2)^2} sin(exp{(x+1/2)^2})`` on ``[0, 1]``."""
    X, scalar = _cols(x, 1)
    e = np.exp((X[:, 0] + 0.5) ** 2)
    return _finish(e * np.sin(e), scalar)


TEST_FUNCTIONS = {
    "franke": (franke, 2),
    "franke-classic": (franke_classic, 2),
    "michalewicz2d": (michalewicz2d, 2),
    "schwefel": (schwefel, None),
    "oscillatory1d": (oscillatory1d, 1),
}


def get_test_function(name):
    """Return ``(callable, dimension)``; dimension ``None`` means any."""
    try:
        return TEST_FUNCTIONS[name]
    except KeyError:
        raise ArgumentError(f"unknown test function {name!r}; choose from {sorted(TEST_FUNCTIONS)}") from None


def eval_test_function(name, x):
    f, _ = get_test_function(name)
    return f(x)
