"""Periodic space-time grid and the discrete difference operators.

The computational domain is Q = [0,1] x Omega where Omega is the torus
R^d / (D Z^d). Time is subdivided into N_T steps of size dt = 1/N_T and
each spatial axis into N_X cells of size dx = D/N_X. Fields are plain
numpy arrays with the following shape conventions:

- scalar field on Omega_D:  shape (N_X,)*d
- scalar field on Q_D:      shape (N_T+1, *spatial)   (time index 0..N_T)
- scalar field on Q'_D:     shape (N_T,   *spatial)   (last slice dropped)
- vector fields carry a leading axis of length d

All spatial operators act on the last d axes, so they broadcast over any
leading time/batch axes. Index arithmetic is modulo N_X (periodic).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# default relative enlargement of the slope radius on which the scheme
# must be monotone (the theory needs some delta > 0 beyond R)
DELTA_FRACTION = 0.05


@dataclass(frozen=True)
class GridSpec:
    """Discretization of Q = [0,1] x R^d/(D Z^d).

    :param d: spatial dimension
    :param D: period of the torus along every axis
    :param N_T: number of time subdivisions
    :param N_X: number of spatial subdivisions per axis
    :param eps: viscosity coefficient of the scheme
    :param R: slope bound imposed on the initial slice of dual potentials
    """

    d: int
    D: float
    N_T: int
    N_X: int
    eps: float
    R: float

    def __post_init__(self) -> None:
        if self.d < 1 or self.N_T < 1 or self.N_X < 1:
            raise ValueError("d, N_T, N_X must be positive")
        if self.D <= 0:
            raise ValueError("period D must be positive")
        if self.eps < 0 or self.R <= 0:
            raise ValueError("eps must be >= 0 and R > 0")

    @property
    def dt(self) -> float:
        return 1.0 / self.N_T

    @property
    def dx(self) -> float:
        return self.D / self.N_X

    @property
    def zeta(self) -> float:
        """Ratio dt/dx, held fixed within a resolution family."""
        return self.dt / self.dx

    @property
    def h(self) -> float:
        """Resolution parameter of the family, equal to dt."""
        return self.dt

    @property
    def diam(self) -> float:
        """Diameter of the torus, D*sqrt(d)/2."""
        return self.D * np.sqrt(self.d) / 2.0

    @property
    def space_shape(self) -> tuple[int, ...]:
        return (self.N_X,) * self.d

    def spatial_nodes(self) -> np.ndarray:
        """Grid point coordinates j*dx along one axis, j = 0..N_X-1."""
        return np.arange(self.N_X) * self.dx

    def times(self) -> np.ndarray:
        """Time grid i*dt, i = 0..N_T."""
        return np.arange(self.N_T + 1) * self.dt

def make_grid(d: int, D: float, N_T: int, N_X: int, cost, R: float | None = None,
              monotone_radius: float | None = None) -> GridSpec:
    """Build a GridSpec with the minimal admissible viscosity.

    eps is set to lip_H(radius)*dx/2 where radius defaults to 1.05*R, the
    slightly enlarged slope class on which monotonicity is required. The
    construction fails loudly when the admissible interval
    [lip_H(radius)/2, dx/(2*d*dt)] for eps/dx is empty, i.e. when the
    time step is too large relative to dx.

    :param cost: CostModel providing lip_L / lip_H
    :param R: slope clamp; defaults to lip_L(diam), the Lipschitz constant
        of the cost on the ball of radius diam(Omega)
    :param monotone_radius: radius of the slope class on which the scheme
        must be monotone; defaults to R + DELTA_FRACTION*R
    """
    diam = D * np.sqrt(d) / 2.0
    if R is None:
        R = float(cost.lip_L(diam))
    if monotone_radius is None:
        monotone_radius = (1.0 + DELTA_FRACTION) * R
    if monotone_radius < R:
        raise ValueError("monotone_radius must be at least R")
    dt = 1.0 / N_T
    dx = D / N_X
    lo = cost.lip_H(monotone_radius) / 2.0
    hi = dx / (2.0 * d * dt)
    if lo > hi:
        raise ValueError(
            f"no admissible viscosity: lip_H({monotone_radius:g})/2 = {lo:g} "
            f"exceeds dx/(2 d dt) = {hi:g}; decrease dt/dx or R")
    eps = lo * dx
    return GridSpec(d=d, D=D, N_T=N_T, N_X=N_X, eps=eps, R=R)


def _check_axis(grid: GridSpec, k: int) -> int:
    if not 0 <= k < grid.d:
        raise ValueError(f"axis {k} out of range for d={grid.d}")
    # spatial axes are the trailing axes of the array
    return k - grid.d


def forward_diff(psi: np.ndarray, grid: GridSpec, k: int = 0) -> np.ndarray:
    """Forward difference along spatial axis k: psi(j+1) - psi(j), periodic."""
    ax = _check_axis(grid, k)
    return np.roll(psi, -1, axis=ax) - psi


def backward_diff(psi: np.ndarray, grid: GridSpec, k: int = 0) -> np.ndarray:
    """Backward difference along spatial axis k: psi(j) - psi(j-1), periodic."""
    ax = _check_axis(grid, k)
    return psi - np.roll(psi, 1, axis=ax)


def centered_gradient(psi: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Centered gradient (backward + forward)/(2 dx), one component per axis.

    Output has a new leading axis of length d.
    """
    comps = [(backward_diff(psi, grid, k) + forward_diff(psi, grid, k)) / (2.0 * grid.dx)
             for k in range(grid.d)]
    return np.stack(comps, axis=0)


def discrete_laplacian(psi: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Discrete Laplacian sum_k (forward - backward)/dx^2."""
    out = np.zeros_like(psi)
    for k in range(grid.d):
        out += forward_diff(psi, grid, k) - backward_diff(psi, grid, k)
    return out / grid.dx ** 2


def time_derivative(phi: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Forward time difference quotient on Q_D: (phi^{i+1} - phi^i)/dt.

    Maps a Q_D field (N_T+1 slices) to a Q'_D field (N_T slices).
    """
    if phi.shape[0] != grid.N_T + 1:
        raise ValueError("time_derivative expects a Q_D field")
    return (phi[1:] - phi[:-1]) / grid.dt


# Adjoints with respect to the unweighted Euclidean inner product on grid
# values. forward_diff^T = -backward_diff, the centered gradient is
# skew-adjoint per component, and the Laplacian is self-adjoint.

def _adj_centered_gradient(m: np.ndarray, grid: GridSpec) -> np.ndarray:
    out = np.zeros(m.shape[1:], dtype=m.dtype)
    for k in range(grid.d):
        out -= (backward_diff(m[k], grid, k) + forward_diff(m[k], grid, k)) / (2.0 * grid.dx)
    return out


def _adj_discrete_laplacian(psi: np.ndarray, grid: GridSpec) -> np.ndarray:
    return discrete_laplacian(psi, grid)


def _adj_forward_diff_over_dx(eta: np.ndarray, grid: GridSpec) -> np.ndarray:
    out = np.zeros(eta.shape[1:], dtype=eta.dtype)
    for k in range(grid.d):
        out -= backward_diff(eta[k], grid, k) / grid.dx
    return out


def _adj_time_derivative(u: np.ndarray, grid: GridSpec) -> np.ndarray:
    if u.shape[0] != grid.N_T:
        raise ValueError("adjoint of time_derivative expects a Q'_D field")
    out = np.zeros((grid.N_T + 1,) + u.shape[1:], dtype=u.dtype)
    out[:-1] -= u / grid.dt
    out[1:] += u / grid.dt
    return out


_ADJOINTS = {
    "centered_gradient": _adj_centered_gradient,
    "discrete_laplacian": _adj_discrete_laplacian,
    "forward_diff_over_dx": _adj_forward_diff_over_dx,
    "time_derivative": _adj_time_derivative,
}


def adjoint_apply(op_tag: str, field: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Apply the exact adjoint of a named operator.

    op_tag is one of 'centered_gradient', 'discrete_laplacian',
    'forward_diff_over_dx', 'time_derivative'. The vector-valued operators
    (gradient, forward_diff_over_dx) take a field with a leading axis of
    length d and return a scalar field.
    """
    try:
        fn = _ADJOINTS[op_tag]
    except KeyError:
        raise ValueError(f"unknown operator tag {op_tag!r}") from None
    if op_tag in ("centered_gradient", "forward_diff_over_dx"):
        if field.shape[0] != grid.d:
            raise ValueError(f"{op_tag} adjoint expects a leading axis of length d={grid.d}")
    return fn(field, grid)
