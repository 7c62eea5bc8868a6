import numpy as np
import pytest
from hypothesis import settings

# numba compiles on first use, which blows any per-example deadline
settings.register_profile("cartamp", deadline=None)
settings.load_profile("cartamp")


def central_diff(f, x, h=1e-6):
    """Central finite-difference Jacobian of f at x (rows = outputs)."""
    x = np.asarray(x, dtype=float)
    f0 = np.atleast_1d(np.asarray(f(x), dtype=float))
    J = np.zeros((f0.size, x.size))
    for k in range(x.size):
        e = np.zeros_like(x)
        e[k] = h
        J[:, k] = (np.atleast_1d(f(x + e)) - np.atleast_1d(f(x - e))).ravel() / (2 * h)
    return J


def series_exp(K, terms=30):
    """Matrix exponential by truncated power series."""
    out = np.eye(K.shape[0])
    term = np.eye(K.shape[0])
    for n in range(1, terms):
        term = term @ K / n
        out = out + term
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
