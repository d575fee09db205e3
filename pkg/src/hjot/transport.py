"""Discrete dynamic optimal transport: constraint operator, objectives, duality.

The dual problem maximizes

    F_D(Phi) = sum Phi^{N_T} d(pi_nu) - sum Phi^0 d(pi_mu)

over potentials Phi on Q_D subject to the linearized scheme constraint
A_t Phi + H(A_x Phi) <= 0 on Q'_D and the slope clamp |A_R Phi| <= R on
the initial slice, where

    A_t Phi(i) = (Phi^{i+1} - Phi^i)/dt - eps lap_D Phi^i     (i < N_T)
    A_x Phi(i) = grad_D Phi^i
    A_R Phi    = fwd_D Phi^0 / dx.

The primal problem minimizes the kinetic action
sum L(lam_m/lam_rho) lam_rho + R |lam_eta|_L1 over multipliers with
A^T lam = F_D, lam_rho >= 0. Strong duality holds; at the optimum the
velocity is recovered as V = lam_m / lam_rho on the support of lam_rho.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .cost import CostModel
from .grid import GridSpec, backward_diff, centered_gradient, discrete_laplacian, forward_diff
from .measures import DiscreteMeasure


@dataclass
class SigmaVars:
    """Split variables mirroring (A_t Phi, A_x Phi, A_R Phi).

    sigma_t: (N_T, *spatial); sigma_x: (d, N_T, *spatial);
    sigma_r: (d, *spatial).
    """

    sigma_t: np.ndarray
    sigma_x: np.ndarray
    sigma_r: np.ndarray

    def copy(self) -> "SigmaVars":
        return SigmaVars(self.sigma_t.copy(), self.sigma_x.copy(), self.sigma_r.copy())

    def norm2(self) -> float:
        """Euclidean norm over all components, fixed summation order."""
        return math.sqrt(float(np.sum(self.sigma_t ** 2))
                         + float(np.sum(self.sigma_x ** 2))
                         + float(np.sum(self.sigma_r ** 2)))


@dataclass
class PrimalVars:
    """Multipliers (mass, momentum, clamp) of the primal problem.

    lambda_rho: (N_T, *spatial); lambda_m: (d, N_T, *spatial);
    lambda_eta: (d, *spatial). Slices of lambda_rho carry mass dt each
    (the time-integrated convention), so lambda_rho/dt is a probability
    weight vector per slice at optimality.
    """

    lambda_rho: np.ndarray
    lambda_m: np.ndarray
    lambda_eta: np.ndarray

    @staticmethod
    def zeros(grid: GridSpec) -> "PrimalVars":
        sp = grid.space_shape
        return PrimalVars(np.zeros((grid.N_T,) + sp),
                          np.zeros((grid.d, grid.N_T) + sp),
                          np.zeros((grid.d,) + sp))


class ConstraintOperator:
    """The concatenated linear operator A = (A_t, A_x, A_R) and its adjoint."""

    def __init__(self, grid: GridSpec):
        self.grid = grid
        self.eps = grid.eps
        self.R = grid.R

    def apply(self, phi: np.ndarray) -> SigmaVars:
        g = self.grid
        if phi.shape != (g.N_T + 1,) + g.space_shape:
            raise ValueError("apply expects a Q_D potential")
        old = phi[:-1]
        sigma_t = (phi[1:] - old) / g.dt - self.eps * discrete_laplacian(old, g)
        sigma_x = centered_gradient(old, g)
        sigma_r = np.stack([forward_diff(phi[0], g, k) for k in range(g.d)]) / g.dx
        return SigmaVars(sigma_t, sigma_x, sigma_r)

    def apply_transpose(self, lam: PrimalVars) -> np.ndarray:
        g = self.grid
        rho, m, eta = lam.lambda_rho, lam.lambda_m, lam.lambda_eta
        out = np.zeros((g.N_T + 1,) + g.space_shape)
        # A_t^T: the adjoint of the time quotient plus the (self-adjoint)
        # viscosity term acting on the old slice
        out[:-1] -= rho / g.dt + self.eps * discrete_laplacian(rho, g)
        out[1:] += rho / g.dt
        # A_x^T: the centered gradient is skew-adjoint per component
        for k in range(g.d):
            out[:-1] -= (backward_diff(m[k], g, k) + forward_diff(m[k], g, k)) / (2.0 * g.dx)
        # A_R^T: adjoint of the forward quotient on the initial slice
        for k in range(g.d):
            out[0] -= backward_diff(eta[k], g, k) / g.dx
        return out


@dataclass
class TransportProblem:
    """Assembled discrete transport instance."""

    grid: GridSpec
    cost: CostModel
    pi_mu: DiscreteMeasure
    pi_nu: DiscreteMeasure
    operator: ConstraintOperator
    objective_data: np.ndarray  # gradient of F_D as a Q_D field

    @property
    def R(self) -> float:
        return self.grid.R


def assemble_problem(grid: GridSpec, cost: CostModel,
                     pi_mu: DiscreteMeasure, pi_nu: DiscreteMeasure) -> TransportProblem:
    for name, meas in (("pi_mu", pi_mu), ("pi_nu", pi_nu)):
        if meas.weights.shape != grid.space_shape:
            raise ValueError(f"{name} does not live on the grid")
    data = np.zeros((grid.N_T + 1,) + grid.space_shape)
    data[0] = -pi_mu.weights
    data[-1] = pi_nu.weights
    return TransportProblem(grid, cost, pi_mu, pi_nu, ConstraintOperator(grid), data)


def objective_FD(phi: np.ndarray, pi_mu: DiscreteMeasure, pi_nu: DiscreteMeasure) -> float:
    """Dual objective: final slice against pi_nu minus initial against pi_mu."""
    if phi.shape[1:] != pi_mu.weights.shape or phi.shape[1:] != pi_nu.weights.shape:
        raise ValueError("potential and measures live on different grids")
    return float(np.sum(phi[-1] * pi_nu.weights)) - float(np.sum(phi[0] * pi_mu.weights))


def support_threshold(lam: PrimalVars, support_tol: float | None = None) -> float:
    if support_tol is None:
        support_tol = 1e-10 * float(np.max(lam.lambda_rho, initial=0.0))
    return max(support_tol, 0.0)


def primal_objective(lam: PrimalVars, R: float, cost: CostModel,
                     support_tol: float | None = None,
                     momentum_tol: float | None = None,
                     neg_tol: float = 1e-4) -> float:
    """Kinetic action sum L(m/rho) rho + R * l1(eta).

    Cells with rho below the support threshold contribute zero when their
    momentum is negligible and make the objective +inf otherwise (the
    lower-semicontinuous perspective). Mass entries below -neg_tol raise.
    """
    rho = lam.lambda_rho
    if float(np.min(rho, initial=0.0)) < -neg_tol:
        raise ValueError("infeasible mass signs in primal variables")
    tol = support_threshold(lam, support_tol)
    if momentum_tol is None:
        momentum_tol = 1e-6 * max(1.0, float(np.max(np.abs(lam.lambda_m), initial=0.0)))
    values, orphan = cost.eval_pointwise_cost(np.maximum(rho, 0.0), lam.lambda_m, zero_tol=tol)
    if orphan.any():
        mnorm = np.sqrt(np.sum(lam.lambda_m ** 2, axis=0))
        if float(np.max(mnorm[orphan])) > momentum_tol:
            return math.inf
    return float(np.sum(values)) + R * float(np.sum(np.abs(lam.lambda_eta)))


def orphan_momentum(lam: PrimalVars, support_tol: float | None = None) -> float:
    """Largest momentum magnitude on cells with negligible mass (reported,
    never enforced per iterate)."""
    tol = support_threshold(lam, support_tol)
    off = lam.lambda_rho <= tol
    if not off.any():
        return 0.0
    mnorm = np.sqrt(np.sum(lam.lambda_m ** 2, axis=0))
    return float(np.max(mnorm[off]))


def duality_gap(phi: np.ndarray, lam: PrimalVars, problem: TransportProblem,
                **kwargs) -> float:
    """primal_objective - F_D; nonnegative up to solver tolerance."""
    return (primal_objective(lam, problem.R, problem.cost, **kwargs)
            - objective_FD(phi, problem.pi_mu, problem.pi_nu))


@dataclass
class FeasibilityReport:
    """Signed worst-case constraint residuals of a dual potential."""

    hj_violation: float     # max of A_t Phi + H(A_x Phi) over Q'_D
    clamp_violation: float  # max |A_R Phi| - R over the initial slice

    @property
    def ok(self) -> bool:
        return self.hj_violation <= 0.0 and self.clamp_violation <= 0.0


def check_dual_feasibility(phi: np.ndarray, problem: TransportProblem) -> FeasibilityReport:
    sig = problem.operator.apply(phi)
    hj = sig.sigma_t + problem.cost.eval_H(sig.sigma_x)
    # the clamp constraint is componentwise: |(A_R Phi)_k| <= R for every axis
    return FeasibilityReport(float(np.max(hj)), float(np.max(np.abs(sig.sigma_r))) - problem.R)


def recover_velocity(lam: PrimalVars, support_tol: float | None = None) -> np.ndarray:
    """V = lambda_m / lambda_rho on the support of lambda_rho, zero elsewhere."""
    tol = support_threshold(lam, support_tol)
    rho = lam.lambda_rho
    on = rho > tol
    inv = np.where(on, 1.0 / np.where(on, rho, 1.0), 0.0)
    return lam.lambda_m * inv
