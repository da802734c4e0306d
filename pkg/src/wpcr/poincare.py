"""Weighted Poincare constants.

A 1D finite-difference eigensolver gives the constant of a Gibbs density
exactly (up to discretization). Two families of closed-form upper bounds
cover the finite- and infinite-dimensional posteriors, where the solver is
not available.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy import linalg

from .errors import BelowThreshold, InvalidInput, InvalidParameter, NumericFailure
from .laplace import gaussian_ratio_series, maxterm_rate

MIN_NODES = 128
DEFAULT_NODES = 2048


@dataclass(frozen=True)
class GridDensity1D:
    """Unnormalized log-density sampled on a uniform grid."""

    grid: np.ndarray
    log_density: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.grid, dtype=float).ravel()
        ld = np.asarray(self.log_density, dtype=float).ravel()
        if x.size < MIN_NODES:
            raise InvalidInput(f"need at least {MIN_NODES} nodes, got {x.size}")
        if ld.shape != x.shape:
            raise InvalidInput("grid and log_density must have the same length")
        if not np.all(np.isfinite(ld)):
            raise InvalidInput("log_density must be finite at every node")
        step = np.diff(x)
        if not np.all(step > 0) or np.ptp(step) > 1e-9 * step.mean():
            raise InvalidInput("grid must be uniform and ascending")
        object.__setattr__(self, "grid", x)
        object.__setattr__(self, "log_density", ld)

    @classmethod
    def from_function(cls, log_density: Callable, lo, hi, nodes=DEFAULT_NODES):
        x = np.linspace(lo, hi, nodes)
        return cls(x, log_density(x))

    @classmethod
    def auto(cls, log_density: Callable, lo=-50.0, hi=50.0, nodes=DEFAULT_NODES, pilot=20001, width=8.0):
        """Place the grid on mean +- ``width`` standard deviations of the density."""
        x = np.linspace(lo, hi, pilot)
        ld = log_density(x)
        w = np.exp(ld - np.max(ld))
        w /= w.sum()
        mu = float(np.sum(w * x))
        sd = float(np.sqrt(np.sum(w * (x - mu) ** 2)))
        if not sd > 0:
            raise NumericFailure("pilot grid does not resolve the density")
        return cls.from_function(log_density, mu - width * sd, mu + width * sd, nodes)

    @property
    def step(self):
        return self.grid[1] - self.grid[0]


def neumann_system(density):
    """Stiffness and mass matrices of the weighted Neumann problem.

    Returns the diagonal and off-diagonal of the symmetric tridiagonal
    stiffness matrix A and the diagonal of the mass matrix B, so that
    A u = mu B u discretizes -(rho u')' = mu rho u with rho' = 0 at both ends.
    """
    h = density.step
    ld = density.log_density - np.max(density.log_density)
    rho = np.exp(ld)
    rho_half = np.exp(0.5 * (ld[:-1] + ld[1:]))
    mass = rho * h
    mass[0] *= 0.5
    mass[-1] *= 0.5
    diag = np.zeros_like(rho)
    diag[:-1] += rho_half / h
    diag[1:] += rho_half / h
    off = -rho_half / h
    return diag, off, mass


def neumann_matrices(density):
    """Dense (A, B) of :func:`neumann_system`, for inspection on small grids."""
    diag, off, mass = neumann_system(density)
    A = np.diag(diag) + np.diag(off, 1) + np.diag(off, -1)
    return A, np.diag(mass)


def poincare_grid_1d(density):
    """Poincare constant c2 = 1/sqrt(mu1) of a 1D density on its grid interval."""
    diag, off, mass = neumann_system(density)
    s = 1.0 / np.sqrt(mass)
    d = diag * s * s
    e = off * s[:-1] * s[1:]
    try:
        vals = linalg.eigh_tridiagonal(d, e, eigvals_only=True, select="i", select_range=(0, 1))
    except (linalg.LinAlgError, ValueError) as exc:
        raise NumericFailure("tridiagonal eigensolve failed") from exc
    mu0, mu1 = float(vals[0]), float(vals[1])
    if abs(mu0) > 1e-8 * max(abs(mu1), 1.0):
        raise NumericFailure("constant mode was not recovered", {"mu0": mu0, "mu1": mu1})
    if not mu1 > 0:
        raise NumericFailure("no positive eigenvalue after removing constants", {"mu1": mu1})
    return 1.0 / np.sqrt(mu1)


def gaussian_poincare_sq(cov):
    """Squared Poincare constant of a Gaussian law: its largest covariance eigenvalue."""
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    return float(np.max(linalg.eigvalsh(0.5 * (cov + cov.T))))


def bakry_emery_sq(rho):
    """Squared Poincare bound 1/rho for a density whose potential has Hessian >= rho."""
    if not rho > 0:
        raise InvalidParameter("curvature lower bound must be positive")
    return 1.0 / rho


@dataclass(frozen=True)
class FrancesiParams:
    """Constants of the finite-dimensional Gibbs-measure bounds.

    ``C_R`` has no explicit value available; it defaults to 1 and absolute
    bound values are then only indicative.
    """

    alpha: float = 1.0
    h: float = 0.0
    c: float = 1.0
    ell: float = 0.0
    R: float = 1.0
    d: int = 1
    G_R: float = 0.0
    U_R: float = 0.0
    C_R: float = 1.0
    d_R: Optional[float] = None
    c1: float = 1.0
    c2: float = 1.0
    G_R_star: float = 0.0
    W_R: float = 0.0
    omega_R: float = 0.0

    def __post_init__(self):
        if not (self.alpha > 0 and self.c > 0 and self.R > 0 and self.d >= 1):
            raise InvalidParameter("need alpha > 0, c > 0, R > 0, d >= 1")
        if min(self.G_R, self.U_R, self.C_R, self.G_R_star, self.W_R) < 0:
            raise InvalidParameter("sup-norm constants must be nonnegative")
        if not (self.c1 > 0 and self.c2 > 0):
            raise InvalidParameter("c1 and c2 must be positive")
        if self.d_R is None:
            object.__setattr__(self, "d_R", (self.d - 1) / self.R)

    def threshold(self, variant=1):
        if variant == 1:
            return max(-self.h / self.alpha, (self.d_R + 1.0 - self.ell) / self.c)
        return max(1.0 + 1.0 / self.c2, -self.h / self.alpha)


def francesi_bound(n, params, variant=1):
    """Upper bound on the squared Poincare constant of exp(-nG - U) in finite dimension."""
    if variant not in (1, 2):
        raise InvalidParameter("variant must be 1 or 2")
    t = params.threshold(variant)
    if not n > t:
        raise BelowThreshold(n, t)
    P = params
    if variant == 1:
        num = P.alpha * n + P.h + (P.c * n + P.ell - P.d_R + n * P.G_R + P.U_R) * P.C_R
        den = (P.alpha * n + P.h) * (P.c * n + P.ell - 1.0 - P.d_R)
    else:
        num = P.alpha * n + P.h + np.exp(P.omega_R) * (P.c1 * n + P.G_R_star + P.W_R)
        den = (P.alpha * n + P.h) * P.c1 * n
    return float(num / den)


@dataclass(frozen=True)
class InfiniteConsts:
    """Constants of the infinite-dimensional Gibbs bound (defaults 1, indicative)."""

    c: float = 1.0
    R: float = 1.0
    traceQ: Optional[float] = None
    C_R: float = 1.0
    G_R: float = 1.0
    variant: int = 1
    c1: float = 1.0
    c2: float = 1.0
    C1: float = 1.0
    G_R_star: float = 1.0
    omega_R: float = 0.0


def infinite_bound(n, spec, consts=InfiniteConsts()):
    """Bound on the squared Poincare constant of exp(-nG) N(m, Q) via the max-term rate."""
    k = consts
    mt = maxterm_rate(n, spec)
    if k.variant == 1:
        trq = k.traceQ if k.traceQ is not None else gaussian_ratio_series(0.0, spec)[0]
        t = trq * (1.0 + 1.0 / k.R) / k.c
        if not n > t:
            raise BelowThreshold(n, t)
        tau = k.c * n - trq * (1.0 + 1.0 / k.R)
        return float((1.0 + k.C_R * (1.0 + tau + n * k.G_R) * mt) / tau)
    if k.variant == 2:
        t = 1.0 + 1.0 / k.c2
        if not n > t:
            raise BelowThreshold(n, t)
        return float((1.0 + np.exp(k.omega_R) * (k.C1 * n + k.G_R_star) * mt) / (k.c1 * n))
    raise InvalidParameter("variant must be 1 or 2")


def l0n_estimate(n, poincare_sq, grad_g_moment=1.0):
    """n times the squared Poincare constant times sqrt of the gradient moment of g."""
    if min(n, poincare_sq, grad_g_moment) < 0:
        raise InvalidParameter("inputs must be nonnegative")
    return float(n * poincare_sq * np.sqrt(grad_g_moment))

