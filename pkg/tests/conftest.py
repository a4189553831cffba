import numpy as np
import pytest

from heisqpt import circuit as cq
from heisqpt import compress as cp


def random_unitary(D, rng):
    z = (rng.normal(size=(D, D)) + 1j * rng.normal(size=(D, D))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def random_density(D, rng, rank=None):
    rank = rank or D
    a = rng.normal(size=(D, rank)) + 1j * rng.normal(size=(D, rank))
    rho = a @ a.conj().T
    return rho / np.trace(rho)


def random_kraus(D, rng, n_ops=3):
    """Random CPTP map from a Stinespring isometry."""
    v = random_unitary(D * n_ops, rng)[:, :D]
    return [v[k * D:(k + 1) * D] for k in range(n_ops)]


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def compressed_l3():
    """Two-layer brickwall for L=3 open, t=1 (Trotter-initialized restart)."""
    problem = cp.CompressionProblem(3, "open", 1.0, 2)
    trace = cp.adam_optimize(problem, cp.AdamConfig(restarts=1, max_iters=2000))
    return cq.build_brickwall(3, 2, trace.best_theta), trace.best_eps


@pytest.fixture(scope="session")
def compressed_l4():
    """Two-layer brickwall for the L=4 periodic chain at t=1."""
    problem = cp.CompressionProblem(4, "periodic", 1.0, 2)
    trace = cp.adam_optimize(problem, cp.AdamConfig(restarts=3, max_iters=3000))
    return cq.build_brickwall(4, 2, trace.best_theta), trace.best_eps
