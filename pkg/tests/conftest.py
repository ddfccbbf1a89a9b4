import numpy as np
import pytest

from wdp_lti.building import BuildingScenario
from wdp_lti.lti import LtiSystem
from wdp_lti.matgauss import Gaussian


def random_orthogonal(rng, n):
    Q, R = np.linalg.qr(rng.standard_normal((n, n)))
    return Q * np.sign(np.diag(R))


def random_spd(rng, n, lo=0.1, hi=10.0):
    """SPD matrix with eigenvalues drawn uniformly from [lo, hi]."""
    Q = random_orthogonal(rng, n)
    w = rng.uniform(lo, hi, n)
    M = (Q * w) @ Q.T
    return 0.5 * (M + M.T)


def random_gaussian(rng, n, lo=0.1, hi=10.0, mean_scale=5.0):
    return Gaussian(rng.uniform(-mean_scale, mean_scale, n), random_spd(rng, n, lo, hi))


def random_system(rng, n=None, m=None, q=None, stable=True):
    n = n or int(rng.integers(1, 4))
    m = m or int(rng.integers(1, 3))
    q = q or int(rng.integers(1, 3))
    A = rng.standard_normal((n, n))
    if stable:
        A *= 0.9 / max(1e-9, np.max(np.abs(np.linalg.eigvals(A))))
    return LtiSystem(A, rng.standard_normal((n, m)), rng.standard_normal((q, n)), rng.standard_normal((q, m)))


@pytest.fixture
def rng():
    return np.random.default_rng(20240917)


@pytest.fixture
def scenario():
    return BuildingScenario()
