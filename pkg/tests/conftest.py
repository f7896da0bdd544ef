import numpy as np
import pytest

from perftestgen.codec import default_space
from perftestgen.simulator import default_benchmark


def numeric_grad(fn, arr, h=1e-5):
    """Central differences of scalar ``fn()`` w.r.t. every entry of ``arr`` (perturbed in place)."""
    g = np.zeros_like(arr)
    it = np.nditer(arr, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = arr[i]
        arr[i] = old + h
        up = fn()
        arr[i] = old - h
        down = fn()
        arr[i] = old
        g[i] = (up - down) / (2 * h)
    return g


def rel_error(a, b):
    a, b = np.ravel(a), np.ravel(b)
    denom = np.linalg.norm(a) + np.linalg.norm(b)
    return 0.0 if denom == 0 else float(np.linalg.norm(a - b) / denom)


@pytest.fixture(scope="session")
def space():
    return default_space()


@pytest.fixture(scope="session")
def bench():
    return default_benchmark(0)
