"""ADMM solver for the saddle-point form of discrete optimal transport.

We solve  max_Phi F_D(Phi)  s.t.  A Phi in C, written with a split variable
Sigma = A Phi and the indicator of C = {(s, w, u): s + H(w) <= 0, |u| <= R}:

    min_Phi  -F_D(Phi) + I_C(Sigma)   s.t.  A Phi - Sigma = 0.

The iteration (unscaled multiplier Lambda):

    Phi    <- argmin: solves  r A^T A Phi = F_D - A^T Lambda + r A^T Sigma
    Sigma  <- proj_C( A Phi + Lambda / r )
    Lambda <- Lambda + r (A Phi - Sigma)

At convergence Lambda is exactly the primal optimizer (mass, momentum,
clamp multiplier) and Phi the dual potential. Stopping: both the primal
residual |A Phi - Sigma|_2 and the dual residual r |A^T(Sigma_k -
Sigma_{k-1})|_2 below stop_tol.

The Phi subproblem is a space-periodic elliptic system: the spatial FFT
diagonalizes it into independent symmetric tridiagonal positive-definite
systems in time (one per frequency), which are prefactored once with a
banded Cholesky. The zero frequency is singular with constant kernel and
is pinned; a global mean subtraction anchors the constant mode. A
matrix-free conjugate-gradient fallback is kept for cross-checking.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_solve_banded, cholesky_banded
from scipy.sparse.linalg import LinearOperator, cg

from .transport import PrimalVars, SigmaVars, TransportProblem, objective_FD


@dataclass
class AdmmConfig:
    """Solver parameters.

    :param r: penalty parameter
    :param stop_tol: threshold for both residual norms
    :param max_iters: iteration cap (non-convergence is flagged, not raised)
    :param phi_solver: 'spectral' (exact, default) or 'cg' (matrix-free)
    :param cg_tol: relative tolerance of the inner CG solve
    :param cg_max_iters: CG iteration cap per outer iteration
    :param adapt_penalty: residual balancing, multiply/divide r by 2 when
        the residual ratio exceeds balance_ratio. On by default: the
        natural scale of r tracks the measure weights (which shrink with
        the grid), and a fixed r=1 stalls the dual residual.
    """

    r: float = 1.0
    stop_tol: float = 1e-5
    max_iters: int = 200000
    phi_solver: str = "spectral"
    cg_tol: float = 1e-10
    cg_max_iters: int = 5000
    adapt_penalty: bool = True
    balance_ratio: float = 10.0

    def __post_init__(self) -> None:
        if self.r <= 0 or self.stop_tol <= 0:
            raise ValueError("r and stop_tol must be positive")
        if self.phi_solver not in ("spectral", "cg"):
            raise ValueError("phi_solver must be 'spectral' or 'cg'")


@dataclass
class AdmmState:
    """Iterates and residual histories of one solve."""

    phi: np.ndarray
    sigma: SigmaVars
    lam: PrimalVars
    iters: int
    primal_res: list[float] = field(default_factory=list)
    dual_res: list[float] = field(default_factory=list)
    objective: list[float] = field(default_factory=list)
    converged: bool = False
    r_final: float = 0.0


class SpectralPhiSolver:
    """Exact solver for A^T A Phi = b via spatial FFT + banded Cholesky.

    For each spatial frequency theta the operator reduces to the
    (N_T+1) x (N_T+1) real symmetric tridiagonal matrix

        M(theta) = B^T B + |g|^2 diag(1..1,0) + |c|^2 e_0 e_0^T

    with B bidiagonal (B[i,i] = -1/dt - eps*l(theta), B[i,i+1] = 1/dt),
    l, g, c the symbols of the Laplacian, centered gradient and forward
    quotient. M is positive definite except at theta = 0, whose kernel is
    the constants; that block is replaced by pinning the first unknown.
    All blocks are stacked into one banded Cholesky factorization, reused
    across iterations (the factor does not depend on the penalty r).
    """

    def __init__(self, grid):
        self.grid = grid
        n = grid.N_T + 1
        axes = tuple(range(-grid.d, 0))
        self.axes = axes
        # rfftn layout: full frequencies on the leading spatial axes,
        # nonnegative frequencies on the last
        freq_shape = (grid.N_X,) * (grid.d - 1) + (grid.N_X // 2 + 1,)
        thetas = np.meshgrid(*[
            2.0 * np.pi * np.arange(sz) / grid.N_X for sz in freq_shape
        ], indexing="ij") if grid.d > 0 else []
        lam_sym = np.zeros(freq_shape)
        g2 = np.zeros(freq_shape)
        for th in thetas:
            lam_sym += (2.0 * np.cos(th) - 2.0) / grid.dx ** 2
            g2 += (np.sin(th) / grid.dx) ** 2
        c2 = -lam_sym  # |e^{i th} - 1|^2 / dx^2 summed over axes
        F = int(np.prod(freq_shape))
        self.freq_shape = freq_shape
        beta = (-1.0 / grid.dt - grid.eps * lam_sym).reshape(F)
        gamma = 1.0 / grid.dt
        g2 = g2.reshape(F)
        c2 = c2.reshape(F)

        diag = np.zeros((F, n))
        off = np.zeros((F, n))  # off[f, i] couples unknowns i-1 and i
        diag[:, :-1] += beta[:, None] ** 2 + g2[:, None]
        diag[:, 1:] += gamma ** 2
        diag[:, 0] += c2
        off[:, 1:] = (beta * gamma)[:, None]
        # theta = 0: kernel is the constants; pin the first unknown
        diag[0, 0] = 1.0
        off[0, 1] = 0.0
        off[0, 0] = 0.0

        ab = np.zeros((2, F * n))
        ab[1] = diag.reshape(-1)
        ab[0] = off.reshape(-1)
        self.n = n
        self.F = F
        self.cho = cholesky_banded(ab, lower=False)

    def solve(self, b: np.ndarray) -> np.ndarray:
        g = self.grid
        bhat = np.fft.rfftn(b, axes=self.axes)          # (n, *freq_shape)
        bh = bhat.reshape(self.n, self.F).T.copy()      # (F, n)
        bh[0, 0] = 0.0  # pinned unknown of the zero frequency
        flat = bh.reshape(-1)
        stacked = np.column_stack([flat.real, flat.imag])
        x = cho_solve_banded((self.cho, False), stacked)
        xhat = (x[:, 0] + 1j * x[:, 1]).reshape(self.F, self.n).T
        xhat = xhat.reshape((self.n,) + self.freq_shape)
        return np.fft.irfftn(xhat, s=g.space_shape, axes=self.axes)


class CgPhiSolver:
    """Matrix-free CG on the normal equations, warm-started."""

    def __init__(self, problem: TransportProblem, tol: float, max_iters: int):
        self.problem = problem
        self.tol = tol
        self.max_iters = max_iters
        g = problem.grid
        self.shape_qd = (g.N_T + 1,) + g.space_shape
        size = int(np.prod(self.shape_qd))
        A = problem.operator

        def matvec(v):
            phi = v.reshape(self.shape_qd)
            sig = A.apply(phi)
            return A.apply_transpose(
                PrimalVars(sig.sigma_t, sig.sigma_x, sig.sigma_r)).reshape(-1)

        self.op = LinearOperator((size, size), matvec=matvec)
        self.x0 = np.zeros(size)

    def solve(self, b: np.ndarray) -> np.ndarray:
        rhs = (b - b.mean()).reshape(-1)
        x, info = cg(self.op, rhs, x0=self.x0, rtol=self.tol, atol=0.0,
                     maxiter=self.max_iters)
        if info > 0:
            warnings.warn(f"phi-update CG stopped after {info} iterations "
                          "without reaching tolerance; continuing with best iterate")
        self.x0 = x
        return x.reshape(self.shape_qd)


def make_phi_solver(problem: TransportProblem, config: AdmmConfig):
    if config.phi_solver == "spectral":
        return SpectralPhiSolver(problem.grid)
    return CgPhiSolver(problem, config.cg_tol, config.cg_max_iters)


def phi_update(solver, problem: TransportProblem, sigma: SigmaVars,
               lam: PrimalVars, r: float) -> np.ndarray:
    """Solve r A^T A Phi = F_D - A^T Lambda + r A^T Sigma, mean-anchored."""
    A = problem.operator
    combined = PrimalVars(lam.lambda_rho - r * sigma.sigma_t,
                          lam.lambda_m - r * sigma.sigma_x,
                          lam.lambda_eta - r * sigma.sigma_r)
    rhs = problem.objective_data - A.apply_transpose(combined)
    phi = solver.solve(rhs / r)
    return phi - phi.mean()


def sigma_update(problem: TransportProblem, a_phi: SigmaVars, lam: PrimalVars,
                 r: float) -> SigmaVars:
    """Project A Phi + Lambda/r onto the constraint set."""
    s, w = problem.cost.project_onto_K(a_phi.sigma_t + lam.lambda_rho / r,
                                       a_phi.sigma_x + lam.lambda_m / r)
    u = np.clip(a_phi.sigma_r + lam.lambda_eta / r, -problem.R, problem.R)
    return SigmaVars(s, w, u)


def lambda_update(lam: PrimalVars, a_phi: SigmaVars, sigma: SigmaVars,
                  r: float) -> PrimalVars:
    """Multiplier ascent Lambda <- Lambda + r (A Phi - Sigma)."""
    return PrimalVars(lam.lambda_rho + r * (a_phi.sigma_t - sigma.sigma_t),
                      lam.lambda_m + r * (a_phi.sigma_x - sigma.sigma_x),
                      lam.lambda_eta + r * (a_phi.sigma_r - sigma.sigma_r))


def solve(problem: TransportProblem, config: AdmmConfig | None = None,
          iter_log=None, log_every: int = 100) -> tuple[np.ndarray, PrimalVars, AdmmState]:
    """Run ADMM to the residual tolerance; returns (phi, lambda, state).

    iter_log, when given, receives CSV rows
    'iteration,primal_res,dual_res,objective' every log_every iterations.
    """
    if config is None:
        config = AdmmConfig()
    g = problem.grid
    A = problem.operator
    r = config.r

    phi = np.zeros((g.N_T + 1,) + g.space_shape)
    lam = PrimalVars.zeros(g)
    sigma = sigma_update(problem, A.apply(phi), lam, r)
    solver = make_phi_solver(problem, config)

    state = AdmmState(phi=phi, sigma=sigma, lam=lam, iters=0)
    if iter_log is not None:
        iter_log.write("iteration,primal_res,dual_res,objective\n")

    for it in range(1, config.max_iters + 1):
        phi = phi_update(solver, problem, sigma, lam, r)
        a_phi = A.apply(phi)
        sigma_new = sigma_update(problem, a_phi, lam, r)
        lam = lambda_update(lam, a_phi, sigma_new, r)

        primal = SigmaVars(a_phi.sigma_t - sigma_new.sigma_t,
                           a_phi.sigma_x - sigma_new.sigma_x,
                           a_phi.sigma_r - sigma_new.sigma_r).norm2()
        delta = PrimalVars(sigma_new.sigma_t - sigma.sigma_t,
                           sigma_new.sigma_x - sigma.sigma_x,
                           sigma_new.sigma_r - sigma.sigma_r)
        dual = r * math.sqrt(float(np.sum(A.apply_transpose(delta) ** 2)))
        sigma = sigma_new

        state.primal_res.append(primal)
        state.dual_res.append(dual)
        fd = objective_FD(phi, problem.pi_mu, problem.pi_nu)
        state.objective.append(fd)
        if iter_log is not None and (it % log_every == 0 or it == 1):
            iter_log.write(f"{it},{primal:.17g},{dual:.17g},{fd:.17g}\n")

        if primal <= config.stop_tol and dual <= config.stop_tol:
            state.converged = True
            state.iters = it
            break

        if config.adapt_penalty:
            if primal > config.balance_ratio * dual:
                r *= 2.0
            elif dual > config.balance_ratio * primal:
                r /= 2.0
    else:
        state.iters = config.max_iters
        warnings.warn(
            f"ADMM did not converge in {config.max_iters} iterations "
            f"(primal {state.primal_res[-1]:.3e}, dual {state.dual_res[-1]:.3e})")

    state.phi = phi
    state.sigma = sigma
    state.lam = lam
    state.r_final = r
    return phi, lam, state
