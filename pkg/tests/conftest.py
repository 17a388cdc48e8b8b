import numpy as np
import pytest


def fd_grad(f, x, h=1e-5):
    """Central finite-difference gradient of scalar f at array x."""
    g = np.zeros_like(x, dtype=float)
    for i in range(x.size):
        xp = x.astype(float).copy()
        xm = x.astype(float).copy()
        xp.flat[i] += h
        xm.flat[i] -= h
        g.flat[i] = (f(xp) - f(xm)) / (2 * h)
    return g


def max_rel_err(a, b, floor=1e-9):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return float(np.max(np.abs(a - b) / denom)) if a.size else 0.0


def assert_grad_close(analytic, numeric, tol=1e-6, floor=1e-9):
    err = max_rel_err(analytic, numeric, floor)
    assert err < tol, f"gradient mismatch: max relative error {err:.3e}"


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
