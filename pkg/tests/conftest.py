"""Shared fixtures and dense reference constructions.

The dense matrix here is assembled entry by entry from the index formulas,
independently of the library's stencil code, so it can serve as an oracle
for the operator tests.
"""
import numpy as np
import pytest

from hjot.bench import solve_instance
from hjot.cost import QuadraticCost


@pytest.fixture(scope="session")
def quad():
    return QuadraticCost()


def dense_constraint_matrix(grid) -> np.ndarray:
    """Dense rows of A = (A_t, A_x, A_R) for d=1.

    Unknown ordering: phi(i, j) at flat index i*N_X + j. Row blocks in the
    order sigma_t (N_T*N_X), sigma_x (N_T*N_X), sigma_r (N_X).
    """
    assert grid.d == 1
    n, m = grid.N_X, grid.N_T
    dt, dx, eps = grid.dt, grid.dx, grid.eps

    def idx(i, j):
        return i * n + j % n

    rows = []
    for i in range(m):
        for j in range(n):
            row = np.zeros((m + 1) * n)
            row[idx(i + 1, j)] += 1.0 / dt
            row[idx(i, j)] -= 1.0 / dt
            # viscosity acts on the old slice
            row[idx(i, j + 1)] -= eps / dx ** 2
            row[idx(i, j - 1)] -= eps / dx ** 2
            row[idx(i, j)] += 2.0 * eps / dx ** 2
            rows.append(row)
    for i in range(m):
        for j in range(n):
            row = np.zeros((m + 1) * n)
            row[idx(i, j + 1)] += 0.5 / dx
            row[idx(i, j - 1)] -= 0.5 / dx
            rows.append(row)
    for j in range(n):
        row = np.zeros((m + 1) * n)
        row[idx(0, j + 1)] += 1.0 / dx
        row[idx(0, j)] -= 1.0 / dx
        rows.append(row)
    return np.array(rows)


def flatten_sigma(sig) -> np.ndarray:
    return np.concatenate([sig.sigma_t.ravel(), sig.sigma_x.ravel(),
                           sig.sigma_r.ravel()])


def flatten_primal(lam) -> np.ndarray:
    return np.concatenate([lam.lambda_rho.ravel(), lam.lambda_m.ravel(),
                           lam.lambda_eta.ravel()])


@pytest.fixture(scope="session")
def case2_n16():
    """Converged solve of the triangle-splitting case at the coarsest mesh."""
    return solve_instance(2, 16)


@pytest.fixture(scope="session")
def case3_n16():
    return solve_instance(3, 16)
