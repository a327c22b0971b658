"""Shared builders for the test suite."""

import numpy as np
import pytest

from weylinv import BoundaryCondition, PotentialGrid, Problem
from weylinv import potentials


@pytest.fixture
def rng():
    return np.random.default_rng(20260826)


def random_projector(n, rng, rank=None):
    """Random orthogonal projector of the given (or random) rank."""
    k = int(rng.integers(0, n + 1)) if rank is None else rank
    X = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    Q, _ = np.linalg.qr(X)
    P = Q[:, :k] @ Q[:, :k].conj().T
    return (P + P.conj().T) / 2.0


def random_unitary(n, rng):
    X = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    U, _ = np.linalg.qr(X)
    return U


def scalar_box_problem(coupling=0.3, x_cut=1.0, x_max=2.0, nodes=401):
    """n = 1 Robin problem (A = 1, h = 0) with a box potential."""
    Q = potentials.box(coupling, x_cut, x_max, nodes=nodes)
    bc = BoundaryCondition(A=np.array([[1.0 + 0j]]),
                           h=np.zeros((1, 1), dtype=complex))
    return Problem(potential=Q, bc=bc)


def smooth_matrix_problem(n, rng, x_max=1.5, nodes=1501, scale=0.4,
                          hermitian_h=True):
    """Random n x n problem with a sum of Gaussian bumps in each entry."""
    x = np.linspace(0.0, x_max, nodes)
    vals = np.zeros((nodes, n, n), dtype=complex)
    for a in range(n):
        for b in range(n):
            c = rng.normal(scale=scale)
            w = rng.uniform(0.15, 0.4)
            m = rng.uniform(0.2, 0.8 * x_max)
            vals[:, a, b] = c * np.exp(-(((x - m) / w) ** 2))
    Q = PotentialGrid(x_nodes=x, values=vals)
    A = random_projector(n, rng)
    h = rng.normal(size=(n, n))
    if hermitian_h:
        h = (h + h.T) / 2.0
    h = A @ h @ A
    return Problem(potential=Q, bc=BoundaryCondition(A=A, h=h))
