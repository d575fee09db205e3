"""Lagrangian/Hamiltonian cost models and the pointwise constraint projection.

A cost model bundles a strictly convex Lagrangian L with its Legendre
transform H and the derived maps used by the optimizer: grad_H, the
improved-Young maps f_L/f_H satisfying

    L(v) + H(w) >= v.w + |f_L(v) - f_H(w)|^2,

and Lipschitz constants of L and H on balls. Velocity/gradient arguments
are arrays with a leading component axis of length d; all maps evaluate
pointwise over the trailing axes.

Supported kinds: 'quadratic' (L(v)=|v|^2/2) and 'power' with exponent
p in (1, inf) (L(v)=|v|^p/p, H(w)=|w|^q/q with 1/p+1/q=1).
"""
from __future__ import annotations

import numpy as np


def _norm(v: np.ndarray) -> np.ndarray:
    """Euclidean norm over the leading component axis."""
    return np.sqrt(np.sum(v * v, axis=0))


def _vector_power(v: np.ndarray, a: float) -> np.ndarray:
    """Vector power v^a = v * |v|^(a-1), with 0^a = 0."""
    n = _norm(v)
    scale = np.where(n > 0, n, 1.0) ** (a - 1.0)
    return v * np.where(n > 0, scale, 0.0)


class CostModel:
    """Base interface; use QuadraticCost, PowerCost or make_cost."""

    kind: str
    p: float
    q: float

    def eval_L(self, v: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def eval_H(self, w: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def grad_H(self, w: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def f_L(self, v: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def f_H(self, w: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def lip_L(self, r: float) -> float:
        """Lipschitz constant of L on the ball of radius r."""
        raise NotImplementedError

    def lip_H(self, r: float) -> float:
        """Lipschitz constant of H on the ball of radius r."""
        raise NotImplementedError

    def project_onto_K(self, a, b):
        raise NotImplementedError

    def eval_pointwise_cost(self, rho: np.ndarray, m: np.ndarray,
                            zero_tol: float = 0.0):
        """Perspective cost rho * L(m/rho), extended lower-semicontinuously.

        Returns (values, orphan) where values(z) = rho(z) L(m(z)/rho(z)) on
        cells with rho > zero_tol and 0 elsewhere, and orphan is the mask of
        cells with rho <= zero_tol but m != 0, whose true cost is +infinity.
        The infinity never enters the values array; callers must branch on
        the mask.
        """
        rho = np.asarray(rho, dtype=float)
        m = np.asarray(m, dtype=float)
        if np.any(rho < -abs(zero_tol) - 1e-15 * np.max(np.abs(rho), initial=0.0)):
            raise ValueError("negative mass in perspective cost")
        pos = rho > zero_tol
        safe_rho = np.where(pos, rho, 1.0)
        vel = m * np.where(pos, 1.0 / safe_rho, 0.0)
        values = np.where(pos, rho * self.eval_L(vel), 0.0)
        orphan = ~pos & (_norm(m) > 0)
        return values, orphan


class QuadraticCost(CostModel):
    """L(v) = |v|^2/2, H(w) = |w|^2/2; grad_H is the identity."""

    kind = "quadratic"
    p = 2.0
    q = 2.0

    def eval_L(self, v):
        return 0.5 * np.sum(np.asarray(v) ** 2, axis=0)

    def eval_H(self, w):
        return 0.5 * np.sum(np.asarray(w) ** 2, axis=0)

    def grad_H(self, w):
        return np.asarray(w, dtype=float)

    def grad_L(self, v):
        return np.asarray(v, dtype=float)

    def f_L(self, v):
        return 0.5 * np.asarray(v, dtype=float)

    def f_H(self, w):
        return 0.5 * np.asarray(w, dtype=float)

    def lip_L(self, r):
        return float(r)

    def lip_H(self, r):
        return float(r)

    def project_onto_K(self, a, b, tol: float = 1e-12, max_iter: int = 100):
        """Euclidean projection of (a, b) onto {(s, w): s + |w|^2/2 <= 0}.

        Feasible points are returned unchanged. For the rest the KKT system
        reduces to the scalar root problem

            g(lambda) = (a - lambda) + |b|^2 / (2 (1+lambda)^2) = 0

        with a unique root lambda >= 0; the projection is
        (s, w) = (a - lambda, b / (1+lambda)). g is convex and decreasing
        on lambda > -1, so Newton from lambda = 0 increases monotonically
        to the root without overshooting. A bisection fallback on the
        bracket [0, a + H(b)] (geometrically widened) guards pathological
        cases.

        a has any shape, b has a leading component axis over the same shape.
        """
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        s = a.copy()
        w = b.copy()
        b2 = np.sum(b * b, axis=0)
        slack = a + 0.5 * b2
        infeas = slack > 0
        if not np.any(infeas):
            return s, w
        ai = a[infeas]
        b2i = b2[infeas]
        lam = np.zeros_like(ai)
        converged = np.zeros(ai.shape, dtype=bool)
        for _ in range(max_iter):
            opl = 1.0 + lam
            g = (ai - lam) + 0.5 * b2i / opl ** 2
            converged = np.abs(g) <= tol
            if converged.all():
                break
            gp = -1.0 - b2i / opl ** 3
            lam = np.where(converged, lam, lam - g / gp)
        if not converged.all():
            # Newton stalled somewhere; bisect the survivors
            bad = ~converged
            lo = np.zeros(np.count_nonzero(bad))
            hi = (ai[bad] + 0.5 * b2i[bad]).copy()
            gb = lambda l: (ai[bad] - l) + 0.5 * b2i[bad] / (1.0 + l) ** 2
            for _ in range(200):
                if np.all(gb(hi) <= 0):
                    break
                hi *= 2.0
            else:
                raise RuntimeError("projection onto K failed to bracket the root")
            for _ in range(200):
                mid = 0.5 * (lo + hi)
                pos = gb(mid) > 0
                lo = np.where(pos, mid, lo)
                hi = np.where(pos, hi, mid)
            lam_bad = 0.5 * (lo + hi)
            if np.max(np.abs(gb(lam_bad))) > 1e3 * tol:
                raise RuntimeError("projection onto K did not converge")
            lam[bad] = lam_bad
        s[infeas] = ai - lam
        w_infeas = b[:, infeas] / (1.0 + lam)
        w[:, infeas] = w_infeas
        return s, w


class PowerCost(CostModel):
    """L(v) = |v|^p / p with conjugate H(w) = |w|^q / q, 1/p + 1/q = 1."""

    kind = "power"

    def __init__(self, p: float):
        if not p > 1:
            raise ValueError("power cost requires p > 1")
        self.p = float(p)
        self.q = self.p / (self.p - 1.0)
        # scaling of the improved-Young maps; max(p, q) makes the
        # inequality hold on both sides of p = 2
        self._young_scale = 1.0 / np.sqrt(2.0 * max(self.p, self.q))

    def eval_L(self, v):
        return _norm(np.asarray(v, dtype=float)) ** self.p / self.p

    def eval_H(self, w):
        return _norm(np.asarray(w, dtype=float)) ** self.q / self.q

    def grad_H(self, w):
        return _vector_power(np.asarray(w, dtype=float), self.q - 1.0)

    def grad_L(self, v):
        return _vector_power(np.asarray(v, dtype=float), self.p - 1.0)

    def f_L(self, v):
        return self._young_scale * _vector_power(np.asarray(v, dtype=float), self.p / 2.0)

    def f_H(self, w):
        return self._young_scale * _vector_power(np.asarray(w, dtype=float), self.q / 2.0)

    def lip_L(self, r):
        return float(r) ** (self.p - 1.0)

    def lip_H(self, r):
        return float(r) ** (self.q - 1.0)

    def project_onto_K(self, a, b, **kwargs):
        raise NotImplementedError(
            "projection onto {s + H(w) <= 0} is only implemented for the "
            "quadratic cost; the saddle-point solver supports quadratic runs only")


def make_cost(spec: str) -> CostModel:
    """Parse a cost descriptor: 'quadratic' or 'power:p' (e.g. 'power:3')."""
    if spec == "quadratic":
        return QuadraticCost()
    if spec.startswith("power:"):
        try:
            p = float(spec.split(":", 1)[1])
        except ValueError:
            raise ValueError(f"malformed cost descriptor {spec!r}") from None
        return PowerCost(p)
    raise ValueError(f"unknown cost kind {spec!r}")
