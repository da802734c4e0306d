"""Exponential-family machinery in a truncated coefficient basis.

The statistic space and its dual are both represented by length-K
coefficient vectors with the Euclidean pairing. Densities have the form
base(x) * exp(<g(theta), beta_x> - M(theta)).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np
from scipy import integrate

from .errors import InvalidInput, NumericFailure

ADMISSIBLE_RADIUS = 50.0


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float


@dataclass(frozen=True)
class Atoms:
    values: np.ndarray


@dataclass(frozen=True)
class ExpFamilySpec:
    """A regular exponential family.

    Callables are vectorized: ``beta`` maps an array of sample points to an
    (m, K) array, ``g`` maps an (m, d) array of parameters to (m, K), and
    ``log_partition`` maps (m, d) to (m,). ``base_density`` is the density of
    the dominating measure on ``sample_space`` (counting measure for atoms).
    ``mean_stat`` optionally gives S(theta) = E_theta[beta] in closed form.
    """

    beta: Callable
    g: Callable
    log_partition: Callable
    base_density: Callable
    sample_space: Union[Interval, Atoms, None]
    dim_stat: int
    admissible: Optional[Callable] = None
    mean_stat: Optional[Callable] = None

    def log_density(self, x, theta):
        """log f(x | theta) for an array of sample points and one parameter."""
        th = np.atleast_2d(np.asarray(theta, dtype=float))
        B = np.atleast_2d(self.beta(x))
        lp = B @ self.g(th)[0] - self.log_partition(th)[0]
        with np.errstate(divide="ignore"):
            return lp + np.log(self.base_density(x))


@dataclass(frozen=True)
class SuffStat:
    value: np.ndarray
    n: int

    def __post_init__(self):
        object.__setattr__(self, "value", np.atleast_1d(np.asarray(self.value, dtype=float)))
        if self.n < 0:
            raise InvalidInput("sample count must be nonnegative")


@dataclass(frozen=True)
class PosteriorKernelSpec:
    """Kernel exp{n[<g(theta), b> - M(theta)]} times the prior."""

    family: ExpFamilySpec
    prior: object
    n: int
    b: np.ndarray

    def __post_init__(self):
        b = np.atleast_1d(np.asarray(self.b, dtype=float))
        if b.shape != (self.family.dim_stat,):
            raise InvalidInput(f"statistic has length {b.size}, family expects {self.family.dim_stat}")
        if self.n < 0:
            raise InvalidInput("n must be nonnegative")
        object.__setattr__(self, "b", b)


def suff_stat_mean(samples, family):
    """Average of beta over the samples."""
    B = family.beta(samples)
    B = np.asarray(B, dtype=float)
    if B.ndim != 2 or B.shape[0] == 0:
        raise InvalidInput("need at least one sample")
    return SuffStat(B.sum(axis=0) / B.shape[0], B.shape[0])


def s_zero(family, theta0, tol=1e-8):
    """Expected statistic S_0 = integral of beta_x against f(x | theta0)."""
    if family.mean_stat is not None:
        return np.asarray(family.mean_stat(theta0), dtype=float)
    space = family.sample_space
    if isinstance(space, Atoms):
        f = np.exp(family.log_density(space.values, theta0))
        return f @ np.atleast_2d(family.beta(space.values))
    if isinstance(space, Interval):

        def integrand(x):
            xs = np.array([x])
            return np.exp(family.log_density(xs, theta0))[0] * family.beta(xs)[0]

        val, err = integrate.quad_vec(integrand, space.lo, space.hi, epsabs=tol * 1e-2, epsrel=1e-12)
        if not np.all(np.isfinite(val)) or err > tol:
            raise NumericFailure("quadrature for S_0 did not converge", {"error": float(err)})
        return np.asarray(val, dtype=float)
    raise NumericFailure("no quadrature available for this sample space")


def _in_box(family, th):
    if family.admissible is not None:
        return family.admissible(th)
    return np.linalg.norm(th, axis=1) <= ADMISSIBLE_RADIUS


def stat_loglik(family, thetas, b, n):
    """n(<g(theta), b> - M(theta)) for a batch of parameters; -inf outside the box."""
    th = np.atleast_2d(np.asarray(thetas, dtype=float))
    ok = _in_box(family, th)
    out = np.full(th.shape[0], -np.inf)
    if n == 0:
        out[ok] = 0.0
        return out
    if ok.any():
        t = th[ok]
        with np.errstate(over="raise", invalid="raise"):
            try:
                val = n * (family.g(t) @ b - family.log_partition(t))
            except FloatingPointError as exc:
                raise NumericFailure("log-partition overflow") from exc
        out[ok] = val
    return out


def log_posterior_unnorm(theta, kernel):
    """Unnormalized log posterior: a float for one parameter, an array for an (m, d) batch."""
    th = np.asarray(theta, dtype=float)
    batch = th.reshape(1, -1) if th.ndim <= 1 else th
    val = stat_loglik(kernel.family, batch, kernel.b, kernel.n) + kernel.prior.logpdf(batch)
    return float(val[0]) if th.ndim <= 1 else val


def _quadrature_kl(model, theta, theta0, tol):
    fam = model.family
    space = fam.sample_space
    if isinstance(space, Atoms):
        l0 = fam.log_density(space.values, theta0)
        l1 = fam.log_density(space.values, theta)
        f0 = np.exp(l0)
        mask = f0 > 0
        return float(np.sum(f0[mask] * (l0[mask] - l1[mask])))
    if isinstance(space, Interval):

        def integrand(x):
            xs = np.array([x])
            l0 = fam.log_density(xs, theta0)[0]
            return np.exp(l0) * (l0 - fam.log_density(xs, theta)[0])

        val, err = integrate.quad(integrand, space.lo, space.hi, epsabs=tol * 1e-3, epsrel=1e-12, limit=200)
        if err > tol:
            raise NumericFailure("KL quadrature did not converge", {"error": err})
        return float(val)
    raise NumericFailure("quadrature KL needs a 1D sample space; the model must supply its own")


def kl_divergence(theta, theta0, model, method="auto", tol=1e-9):
    """K(theta | theta0) = E_theta0[log f(x|theta0) - log f(x|theta)].

    ``method`` is "auto" (closed form when the model has one), "analytic" or
    "quadrature".
    """
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    theta0 = np.atleast_1d(np.asarray(theta0, dtype=float))
    if method in ("auto", "analytic") and hasattr(model, "kl"):
        val = model.kl(theta, theta0)
    elif method == "analytic":
        raise NumericFailure("model has no closed-form KL")
    elif hasattr(model, "kl_quadrature"):
        val = model.kl_quadrature(theta, theta0)
    else:
        val = _quadrature_kl(model, theta, theta0, tol)
    if val < -tol:
        raise NumericFailure("negative KL divergence", {"value": val})
    return max(float(val), 0.0)


def kl_representation_residual(theta, kernel, theta_b, model, method="quadrature"):
    """Deviation between the exponential-family kernel and the KL kernel.

    Returns [n(<g(theta),b> - M(theta)) + n K(theta|theta_b)] minus the same
    expression at theta_b; both kernels define the same posterior exactly when
    this is zero for every theta.
    """
    fam, n, b = kernel.family, kernel.n, kernel.b
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    theta_b = np.atleast_1d(np.asarray(theta_b, dtype=float))

    def lhs(t):
        t2 = t[None, :]
        return float(n * (fam.g(t2)[0] @ b - fam.log_partition(t2)[0]))

    k = kl_divergence(theta, theta_b, model, method=method)
    return lhs(theta) + n * k - lhs(theta_b)
