import numpy as np
import pytest


def finite_difference(fn, x, h=1e-5):
    """Central-difference gradient of scalar fn w.r.t. array x."""
    g = np.zeros_like(x, dtype=np.float64)
    flat = x.reshape(-1)
    gflat = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = fn(x)
        flat[i] = orig - h
        fm = fn(x)
        flat[i] = orig
        gflat[i] = (fp - fm) / (2.0 * h)
    return g


def rel_err(a, b, floor=1e-8):
    return np.abs(a - b) / (np.abs(b) + floor)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
