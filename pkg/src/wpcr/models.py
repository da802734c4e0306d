"""Concrete statistical models and priors.

Every model exposes the same surface: an exponential-family description
(``family``), a sampler under theta0, the sufficient statistic, KL
divergence, and the pieces the bound needs (statistic norm, squared norm of
the derivative of g, a concentration bound for the statistic when beta is
bounded, and a Poincare-constant route for posteriors at a given statistic).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Optional

import numpy as np
from scipy import integrate, linalg, special, stats

from .errors import InvalidInput, InvalidParameter, NumericFailure
from .expfam import ADMISSIBLE_RADIUS, Atoms, ExpFamilySpec, Interval, s_zero, stat_loglik, suff_stat_mean
from .laplace import SpectralDecay
from .poincare import InfiniteConsts, bakry_emery_sq, gaussian_poincare_sq, infinite_bound

GL_NODES = 2048
SAMPLER_NODES = 8192


@lru_cache(maxsize=8)
def gauss_legendre_unit(nodes=GL_NODES):
    """Gauss-Legendre nodes and weights on [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(nodes)
    return 0.5 * (x + 1.0), 0.5 * w


def _rng(seed):
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def _logsumexp_rows(a):
    top = a.max(axis=1)
    return top + np.log(np.exp(a - top[:, None]).sum(axis=1))


def _log_integral(th, B, logw, chunk=4096):
    """log of the quadrature of exp(th . B(y)) for each row of th, in bounded memory."""
    out = np.empty(th.shape[0])
    for i in range(0, th.shape[0], chunk):
        out[i : i + chunk] = _logsumexp_rows(th[i : i + chunk] @ B.T + logw)
    return out


def pinelis_tail(n, t, D):
    """P(||mean of n centered vectors|| >= t) <= 2 exp(-n t^2 / (2 D^2)) when ||X - EX|| <= D."""
    if t <= 0:
        return 1.0
    return float(min(1.0, 2.0 * np.exp(-n * t * t / (2.0 * D * D))))


def _inverse_cdf_sampler(log_f, n, rng, lo=0.0, hi=1.0, nodes=SAMPLER_NODES):
    x = np.linspace(lo, hi, nodes + 1)
    lf = log_f(x)
    f = np.exp(lf - lf.max())
    cdf = np.concatenate(([0.0], np.cumsum(0.5 * (f[1:] + f[:-1]) * np.diff(x))))
    cdf /= cdf[-1]
    return np.interp(rng.random(n), cdf, x)


# ----------------------------------------------------------------- priors


@dataclass(frozen=True)
class KLPrior:
    """Gaussian prior with independent coefficients Z_k ~ N(m_k, lam_k)."""

    m: np.ndarray
    lam: np.ndarray
    basis: str = "coefficients"

    def __post_init__(self):
        m = np.atleast_1d(np.asarray(self.m, dtype=float))
        lam = np.atleast_1d(np.asarray(self.lam, dtype=float))
        if lam.size == 1 and m.size > 1:
            lam = np.full(m.size, lam[0])
        if m.shape != lam.shape:
            raise InvalidInput("m and lam must have the same length")
        if not np.all(lam > 0) or not np.all(np.isfinite(lam)):
            raise InvalidParameter("prior variances must be positive and finite")
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "lam", lam)

    @classmethod
    def power(cls, K, a, mean=None, scale=1.0):
        """lam_k = scale * k^-(1+a)."""
        k = np.arange(1, K + 1, dtype=float)
        m = np.zeros(K) if mean is None else mean
        return cls(m, scale * k ** (-(1.0 + a)))

    @property
    def dim(self):
        return self.m.size

    @property
    def mean(self):
        return self.m

    @property
    def cov(self):
        return np.diag(self.lam)

    @property
    def variances(self):
        return self.lam

    degenerate = False

    def logpdf(self, thetas):
        th = np.atleast_2d(thetas)
        z = (th - self.m) ** 2 / self.lam
        return -0.5 * z.sum(axis=1) - 0.5 * np.sum(np.log(2 * np.pi * self.lam))

    def sample(self, rng, size):
        rng = _rng(rng)
        return self.m + np.sqrt(self.lam) * rng.standard_normal((size, self.dim))


def kl_prior_sample(prior, seed):
    """One draw of the coefficient vector from a Karhunen-Loeve prior."""
    return prior.sample(seed, 1)[0]


@dataclass(frozen=True)
class DirichletPrior:
    """Density proportional to prod theta_i^(alpha-1) on the open simplex (free coordinates)."""

    N: int
    alpha: float = 2.0

    def __post_init__(self):
        if self.alpha <= 1:
            raise InvalidParameter("alpha must exceed 1 so the density vanishes on the boundary")
        if self.N < 2:
            raise InvalidParameter("need N >= 2 categories")

    degenerate = False

    @property
    def dim(self):
        return self.N - 1

    @property
    def mean(self):
        return np.full(self.dim, 1.0 / self.N)

    @property
    def variances(self):
        a0 = self.N * self.alpha
        p = 1.0 / self.N
        return np.full(self.dim, p * (1 - p) / (a0 + 1))

    @property
    def cov(self):
        a0 = self.N * self.alpha
        p = np.full(self.dim, 1.0 / self.N)
        return (np.diag(p) - np.outer(p, p)) / (a0 + 1)

    @property
    def log_norm(self):
        return float(special.gammaln(self.N * self.alpha) - self.N * special.gammaln(self.alpha))

    def logpdf(self, thetas):
        th = np.atleast_2d(thetas)
        full = np.column_stack([th, 1.0 - th.sum(axis=1)])
        out = np.full(th.shape[0], -np.inf)
        ok = np.all(full > 0, axis=1)
        out[ok] = (self.alpha - 1.0) * np.log(full[ok]).sum(axis=1) + self.log_norm
        return out

    def sample(self, rng, size):
        return _rng(rng).dirichlet(np.full(self.N, self.alpha), size)[:, :-1]


def multinomial_prior_density(theta, alpha=2.0):
    """Dirichlet-shaped density on the closed simplex; ``theta`` holds the free coordinates."""
    th = np.atleast_1d(np.asarray(theta, dtype=float))
    prior = DirichletPrior(th.size + 1, alpha)
    full = np.append(th, 1.0 - th.sum())
    if np.any(full < -1e-15):
        raise InvalidInput("theta lies outside the simplex")
    if np.any(full <= 0):
        return 0.0
    return float(np.exp(prior.logpdf(th)[0]))


@dataclass(frozen=True)
class PointPrior:
    """Point mass at ``theta``: the posterior equals the prior for every sample."""

    theta: np.ndarray
    degenerate = True

    def __post_init__(self):
        object.__setattr__(self, "theta", np.atleast_1d(np.asarray(self.theta, dtype=float)))

    @property
    def dim(self):
        return self.theta.size

    @property
    def mean(self):
        return self.theta

    def logpdf(self, thetas):
        th = np.atleast_2d(thetas)
        return np.where(np.all(th == self.theta, axis=1), 0.0, -np.inf)


# ----------------------------------------------------------------- base


class StatModel:
    """Shared behaviour; subclasses set ``dim`` and ``family``."""

    name = "model"
    dim: int
    family: ExpFamilySpec
    chart = None  # optional (lo, hi, to_theta, log_jacobian) for grid posteriors

    def suff_stat(self, data):
        return suff_stat_mean(data, self.family)

    def s_zero(self, theta0):
        return s_zero(self.family, theta0)

    def stat_loglik(self, thetas, b, n):
        return stat_loglik(self.family, thetas, b, n)

    def loglik_data(self, data, thetas):
        """Sum over observations of log f(x_i | theta), pointwise (no statistic)."""
        th = np.atleast_2d(thetas)
        out = np.empty(th.shape[0])
        for j, t in enumerate(th):
            out[j] = np.sum(self.family.log_density(data, t))
        return out

    def stat_norm(self, db):
        return float(np.linalg.norm(db))

    def project_stat(self, b):
        return np.asarray(b, dtype=float)

    def grad_g_sq(self, thetas):
        """Squared operator norm of the derivative of g at each parameter."""
        return np.ones(np.atleast_2d(thetas).shape[0])

    def grad_g_moment(self, est):
        """Posterior mean of grad_g_sq, approximated at the posterior mean."""
        return float(self.grad_g_sq(est.mean)[0])

    def stat_tail_bound(self, n, t, theta0):
        """Upper bound on P(||S_n - S_0|| >= t), or None when beta is unbounded."""
        return None

    def in_domain(self, thetas):
        return np.linalg.norm(np.atleast_2d(thetas), axis=1) <= ADMISSIBLE_RADIUS


# ----------------------------------------------------------------- Gaussian location


class GaussianLocationModel(StatModel):
    """X ~ N(theta, sigma^2) in one dimension; the conjugate sanity case."""

    name = "gaussian"

    def __init__(self, sigma=1.0):
        if not sigma > 0:
            raise InvalidParameter("sigma must be positive")
        self.sigma = float(sigma)
        self.dim = 1
        s2 = self.sigma**2
        self.family = ExpFamilySpec(
            beta=lambda x: np.atleast_1d(np.asarray(x, dtype=float)).reshape(-1, 1),
            g=lambda th: np.atleast_2d(th) / s2,
            log_partition=lambda th: np.atleast_2d(th)[:, 0] ** 2 / (2 * s2),
            base_density=lambda x: stats.norm.pdf(x, scale=self.sigma),
            sample_space=Interval(-np.inf, np.inf),
            dim_stat=1,
            mean_stat=lambda th: np.atleast_1d(np.asarray(th, dtype=float)),
        )

    def sample(self, theta0, n, seed=None):
        return float(np.atleast_1d(theta0)[0]) + self.sigma * _rng(seed).standard_normal(n)

    def loglik_data(self, data, thetas):
        x = np.asarray(data, dtype=float).ravel()
        th = np.atleast_2d(thetas)[:, 0]
        s2 = self.sigma**2
        sq = np.sum(x * x) - 2 * th * np.sum(x) + x.size * th * th
        return -0.5 * sq / s2 - 0.5 * x.size * np.log(2 * np.pi * s2)

    def kl(self, theta, theta0):
        d = float(np.atleast_1d(theta)[0] - np.atleast_1d(theta0)[0])
        return d * d / (2 * self.sigma**2)

    def grad_g_sq(self, thetas):
        return np.full(np.atleast_2d(thetas).shape[0], self.sigma**-4)

    def stat_tail_bound(self, n, t, theta0):
        return float(2 * stats.norm.sf(t * np.sqrt(n) / self.sigma))

    def exact_posterior(self, prior, b, n):
        if not isinstance(prior, KLPrior):
            return None
        prec = 1.0 / prior.lam[0] + n / self.sigma**2
        mean = (prior.m[0] / prior.lam[0] + n * float(np.atleast_1d(b)[0]) / self.sigma**2) / prec
        return np.array([mean]), np.array([[1.0 / prec]])

    def poincare_sq(self, b, n, prior, est, theta0=None):
        return gaussian_poincare_sq(est.cov)


# ----------------------------------------------------------------- multinomial


def multinomial_kl(theta, theta0):
    """sum_i theta0_i log(theta0_i / theta_i) over all N categories (free coordinates in)."""
    th = np.atleast_1d(np.asarray(theta, dtype=float))
    t0 = np.atleast_1d(np.asarray(theta0, dtype=float))
    if th.shape != t0.shape:
        raise InvalidInput("parameters must have the same length")
    f = np.append(th, 1.0 - th.sum())
    f0 = np.append(t0, 1.0 - t0.sum())
    if np.any(f <= 0) or np.any(f0 <= 0):
        raise InvalidInput("multinomial KL needs interior points of the simplex")
    return float(np.sum(f0 * np.log(f0 / f)))


class MultinomialModel(StatModel):
    """Categorical observations in {0, ..., N-1}; parameters are the first N-1 probabilities."""

    name = "multinomial"

    def __init__(self, N=3):
        if N < 2:
            raise InvalidParameter("need N >= 2")
        self.N = int(N)
        self.dim = self.N - 1
        d = self.dim

        def beta(x):
            x = np.atleast_1d(np.asarray(x)).astype(int)
            if np.any((x < 0) | (x >= self.N)):
                raise InvalidInput("category out of range")
            return np.eye(self.N)[x][:, :d]

        def full(th):
            th = np.atleast_2d(th)
            return th, 1.0 - th.sum(axis=1)

        def g(th):
            th, last = full(th)
            return np.log(th) - np.log(last)[:, None]

        def M(th):
            return -np.log(full(th)[1])

        self.family = ExpFamilySpec(
            beta=beta,
            g=g,
            log_partition=M,
            base_density=lambda x: np.ones(np.atleast_1d(x).shape[0]),
            sample_space=Atoms(np.arange(self.N)),
            dim_stat=d,
            admissible=self.in_domain,
            mean_stat=lambda th: np.atleast_1d(np.asarray(th, dtype=float)),
        )
        if d == 1:
            self.chart = (np.array([0.0]), np.array([1.0]), lambda z: z, lambda z: np.zeros(z.shape[0]))
        elif d == 2:
            # Collapsed square: theta1 = s, theta2 = (1 - s) t, Jacobian (1 - s).
            def to_theta(z):
                return np.column_stack([z[:, 0], (1.0 - z[:, 0]) * z[:, 1]])

            def log_jac(z):
                with np.errstate(divide="ignore"):
                    return np.log1p(-z[:, 0])

            self.chart = (np.zeros(2), np.ones(2), to_theta, log_jac)

    def in_domain(self, thetas):
        th = np.atleast_2d(thetas)
        return np.all(th > 0, axis=1) & (th.sum(axis=1) < 1.0)

    def full(self, theta):
        th = np.atleast_1d(np.asarray(theta, dtype=float))
        return np.append(th, 1.0 - th.sum())

    def sample(self, theta0, n, seed=None):
        return _rng(seed).choice(self.N, size=n, p=self.full(theta0))

    def loglik_data(self, data, thetas):
        counts = np.bincount(np.asarray(data, dtype=int), minlength=self.N)
        th = np.atleast_2d(thetas)
        out = np.full(th.shape[0], -np.inf)
        ok = self.in_domain(th)
        full = np.column_stack([th[ok], 1.0 - th[ok].sum(axis=1)])
        out[ok] = np.log(full) @ counts
        return out

    def kl(self, theta, theta0):
        return multinomial_kl(theta, theta0)

    def grad_g_sq(self, thetas):
        th = np.atleast_2d(thetas)
        last = 1.0 - th.sum(axis=1)
        J = np.einsum("mi,ij->mij", 1.0 / th, np.eye(self.dim)) + (1.0 / last)[:, None, None]
        return np.linalg.eigvalsh(J)[:, -1] ** 2

    def _beta_range(self, theta0):
        atoms = self.family.beta(np.arange(self.N))
        return float(np.max(np.linalg.norm(atoms - np.asarray(theta0, dtype=float), axis=1)))

    def stat_tail_bound(self, n, t, theta0):
        return pinelis_tail(n, t, self._beta_range(theta0))

    def project_stat(self, b, margin=1e-6):
        full = np.clip(self.full(b), margin, None)
        return (full / full.sum())[:-1]

    def poincare_sq(self, b, n, prior, est=None, theta0=None):
        # Potential -sum_i (n b_i + alpha - 1) log theta_i on a convex set; its
        # Hessian dominates min_i (n b_i + alpha - 1) since theta_i <= 1.
        alpha = getattr(prior, "alpha", 1.0)
        full = self.full(b)
        return bakry_emery_sq(float(np.min(n * full + alpha - 1.0)))


# ----------------------------------------------------------------- finite logistic


class FiniteLogisticModel(StatModel):
    """Density proportional to exp(theta . Gamma_N(x)) on [0, 1], Gamma_N(x) = (sin k pi x)_k."""

    name = "finite_logistic"

    def __init__(self, N=2):
        if N < 1:
            raise InvalidParameter("need N >= 1")
        self.N = self.dim = int(N)
        self._y, self._w = gauss_legendre_unit()
        self._B = self.basis(self._y)
        self._logw = np.log(self._w)
        self.family = ExpFamilySpec(
            beta=self.basis,
            g=lambda th: np.atleast_2d(th),
            log_partition=self.log_partition,
            base_density=lambda x: ((np.asarray(x) >= 0) & (np.asarray(x) <= 1)).astype(float),
            sample_space=Interval(0.0, 1.0),
            dim_stat=self.N,
            mean_stat=self.mean_stat,
        )

    def basis(self, x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return np.sin(np.pi * np.outer(x, np.arange(1, self.N + 1)))

    def log_partition(self, thetas):
        th = np.atleast_2d(thetas)
        with np.errstate(over="raise"):
            try:
                return _log_integral(th, self._B, self._logw)
            except FloatingPointError as exc:
                raise NumericFailure("log-partition overflow") from exc

    def mean_stat(self, theta):
        th = np.atleast_1d(np.asarray(theta, dtype=float))
        lw = self._B @ th + self._logw
        p = np.exp(lw - special.logsumexp(lw))
        return p @ self._B

    def log_density(self, x, theta):
        th = np.atleast_1d(np.asarray(theta, dtype=float))
        return self.basis(x) @ th - self.log_partition(th)[0]

    def sample(self, theta0, n, seed=None):
        th = np.atleast_1d(np.asarray(theta0, dtype=float))
        return _inverse_cdf_sampler(lambda x: self.basis(x) @ th, n, _rng(seed))

    def loglik_data(self, data, thetas):
        th = np.atleast_2d(thetas)
        per_obs = self.basis(data) @ th.T  # (n, m)
        return per_obs.sum(axis=0) - len(data) * self.log_partition(th)

    def kl(self, theta, theta0):
        th = np.atleast_1d(np.asarray(theta, dtype=float))
        t0 = np.atleast_1d(np.asarray(theta0, dtype=float))
        M = self.log_partition(np.vstack([th, t0]))
        return float(M[0] - M[1] - (th - t0) @ self.mean_stat(t0))

    def kl_quadrature(self, theta, theta0):
        """KL by adaptive quadrature, normalizers included, independent of the fixed rule."""
        th = np.atleast_1d(np.asarray(theta, dtype=float))
        t0 = np.atleast_1d(np.asarray(theta0, dtype=float))

        def pot(x, t):
            return float(self.basis(np.array([x]))[0] @ t)

        opts = dict(epsabs=1e-13, epsrel=1e-11, limit=200)
        Z = integrate.quad(lambda x: np.exp(pot(x, th)), 0, 1, **opts)[0]
        Z0 = integrate.quad(lambda x: np.exp(pot(x, t0)), 0, 1, **opts)[0]
        val = integrate.quad(lambda x: np.exp(pot(x, t0)) * (pot(x, t0) - pot(x, th)), 0, 1, **opts)[0]
        return float(val / Z0 - np.log(Z0) + np.log(Z))

    def density_integral(self, theta):
        th = np.atleast_1d(np.asarray(theta, dtype=float))
        return integrate.quad(lambda x: np.exp(self.log_density(np.array([x]), th)[0]), 0, 1, epsabs=1e-12)[0]

    def _beta_range(self, theta0):
        x = np.linspace(0, 1, 4097)
        return float(np.max(np.linalg.norm(self.basis(x) - self.mean_stat(theta0), axis=1))) * (1 + 1e-6)

    def stat_tail_bound(self, n, t, theta0):
        return pinelis_tail(n, t, self._beta_range(theta0))

    def poincare_sq(self, b, n, prior, est, theta0=None):
        # Laplace route: the posterior is asymptotically Gaussian with this covariance.
        return gaussian_poincare_sq(est.cov)


# ----------------------------------------------------------------- infinite logistic


def e_basis(x, K):
    """e_k(x) = sqrt(2)/(k pi) (1 - cos k pi x), k = 1..K, as an (len(x), K) array."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    k = np.arange(1, K + 1) * np.pi
    return np.sqrt(2.0) / k * (1.0 - np.cos(np.outer(x, k)))


def e_basis_deriv(x, K):
    x = np.atleast_1d(np.asarray(x, dtype=float))
    k = np.arange(1, K + 1) * np.pi
    return np.sqrt(2.0) * np.sin(np.outer(x, k))


def h1_gram(K, nodes=GL_NODES):
    """Gram matrix of e_1..e_K in the inner product int u' v', by Gauss-Legendre quadrature."""
    y, w = gauss_legendre_unit(nodes)
    D = e_basis_deriv(y, K)
    return (D * w[:, None]).T @ D


@dataclass(frozen=True)
class UnitGrid:
    """Uniform grid on [0, 1] with high-order cumulative integrals and derivatives."""

    nodes: int = 4097
    x: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.nodes < 9:
            raise InvalidParameter("grid needs at least 9 nodes")
        object.__setattr__(self, "x", np.linspace(0.0, 1.0, self.nodes))

    @property
    def h(self):
        return 1.0 / (self.nodes - 1)

    def cumint(self, f):
        return integrate.cumulative_simpson(f, x=self.x, initial=0.0)

    def integral(self, f):
        return float(integrate.simpson(f, x=self.x))

    def deriv(self, f):
        """Fourth-order finite differences (one-sided five-point stencils at the ends)."""
        f = np.asarray(f, dtype=float)
        h = self.h
        d = np.empty_like(f)
        d[2:-2] = (f[:-4] - 8 * f[1:-3] + 8 * f[3:-1] - f[4:]) / (12 * h)
        d[0] = (-25 * f[0] + 48 * f[1] - 36 * f[2] + 16 * f[3] - 3 * f[4]) / (12 * h)
        d[1] = (-3 * f[0] - 10 * f[1] + 18 * f[2] - 6 * f[3] + f[4]) / (12 * h)
        d[-1] = (25 * f[-1] - 48 * f[-2] + 36 * f[-3] - 16 * f[-4] + 3 * f[-5]) / (12 * h)
        d[-2] = (3 * f[-1] + 10 * f[-2] - 18 * f[-3] + 6 * f[-4] - f[-5]) / (12 * h)
        return d

    def h1_inner(self, u, v):
        """<u, v> = integral of u' v' (the inner product of functions vanishing at 0)."""
        return self.integral(self.deriv(u) * self.deriv(v))


class InfiniteLogisticModel(StatModel):
    """Density proportional to exp(theta(x)) on [0, 1], theta in the span of e_1..e_K."""

    name = "infinite_logistic"

    def __init__(self, K=16):
        if K < 1:
            raise InvalidParameter("need K >= 1")
        self.K = self.dim = int(K)
        self._y, self._w = gauss_legendre_unit()
        self._E = e_basis(self._y, self.K)
        self._logw = np.log(self._w)
        self.family = ExpFamilySpec(
            beta=lambda x: e_basis(x, self.K),
            g=lambda th: np.atleast_2d(th),
            log_partition=self.log_partition,
            base_density=lambda x: ((np.asarray(x) >= 0) & (np.asarray(x) <= 1)).astype(float),
            sample_space=Interval(0.0, 1.0),
            dim_stat=self.K,
            mean_stat=self.mean_stat,
        )

    def theta_values(self, theta, x):
        return e_basis(x, self.K) @ np.atleast_1d(np.asarray(theta, dtype=float))

    def log_partition(self, thetas):
        th = np.atleast_2d(thetas)
        with np.errstate(over="raise"):
            try:
                return _log_integral(th, self._E, self._logw)
            except FloatingPointError as exc:
                raise NumericFailure("log-partition overflow") from exc

    def log_partition_function(self, fun):
        """log of the integral of exp(fun(y)) over [0, 1] for an arbitrary function."""
        return float(special.logsumexp(fun(self._y) + self._logw))

    def mean_stat(self, theta):
        th = np.atleast_1d(np.asarray(theta, dtype=float))
        lw = self._E @ th + self._logw
        p = np.exp(lw - special.logsumexp(lw))
        return p @ self._E

    def stat_cov_trace(self, theta0):
        """Trace of the covariance of beta_X under theta0."""
        th = np.atleast_1d(np.asarray(theta0, dtype=float))
        lw = self._E @ th + self._logw
        p = np.exp(lw - special.logsumexp(lw))
        s0 = p @ self._E
        return float(p @ np.sum(self._E**2, axis=1) - s0 @ s0)

    def log_density(self, x, theta):
        return self.theta_values(theta, x) - self.log_partition(theta)[0]

    def sample(self, theta0, n, seed=None):
        return _inverse_cdf_sampler(lambda x: self.theta_values(theta0, x), n, _rng(seed))

    def loglik_data(self, data, thetas):
        th = np.atleast_2d(thetas)
        return (e_basis(data, self.K) @ th.T).sum(axis=0) - len(data) * self.log_partition(th)

    def kl(self, theta, theta0):
        th = np.atleast_1d(np.asarray(theta, dtype=float))
        t0 = np.atleast_1d(np.asarray(theta0, dtype=float))
        M = self.log_partition(np.vstack([th, t0]))
        return float(M[0] - M[1] - (th - t0) @ self.mean_stat(t0))

    def osc(self, theta0, nodes=4097):
        v = self.theta_values(theta0, np.linspace(0, 1, nodes))
        return float(v.max() - v.min())

    def gamma_star(self, theta0):
        k = np.arange(1, self.K + 1)
        return np.exp(-self.osc(theta0)) / (k * np.pi) ** 2

    def spectral(self, prior, theta0):
        """Spectral data of (prior, model) in the e_k basis, with gamma_k the lower Fisher bound."""
        omega = np.atleast_1d(theta0) - prior.m
        return SpectralDecay(prior.lam, self.gamma_star(theta0), omega=omega, m=prior.m)

    def _beta_range(self, theta0):
        x = np.linspace(0, 1, 4097)
        return float(np.max(np.linalg.norm(e_basis(x, self.K) - self.mean_stat(theta0), axis=1))) * (1 + 1e-6)

    def poincare_sq(self, b, n, prior, est=None, theta0=None, consts=None):
        # Gibbs bound for exp(-nG) N(m, Q), with all unknown constants at 1.
        t0 = prior.m if theta0 is None else theta0
        return infinite_bound(n, self.spectral(prior, t0), consts or InfiniteConsts())

    def stat_tail_bound(self, n, t, theta0):
        return pinelis_tail(n, t, self._beta_range(theta0))


def _grid_values(h, grid):
    """Accept grid values (length ``grid.nodes``) or e_k coefficients."""
    h = np.atleast_1d(np.asarray(h, dtype=float))
    if h.ndim != 1:
        raise InvalidInput("expected grid values or a coefficient vector")
    if h.size == grid.nodes:
        return h
    return e_basis(grid.x, h.size) @ h


def osc_values(values):
    return float(np.max(values) - np.min(values))


def apply_istar(h, theta0=None, grid=None):
    """Lower Fisher operator exp(-osc theta0) [int beta_x(y) h(y) dy - (x - x^2/2) int h].

    ``h`` and ``theta0`` are either values on ``grid`` or coefficient vectors
    in the e_k basis. Uses beta_x(y) = min(x, y).
    """
    grid = grid or UnitGrid(4097)
    hv = _grid_values(h, grid)
    osc = 0.0 if theta0 is None else osc_values(_grid_values(theta0, grid))
    x = grid.x
    ch = grid.cumint(hv)
    total = ch[-1]
    first = grid.cumint(x * hv) + x * (total - ch)
    return np.exp(-osc) * (first - (x - 0.5 * x * x) * total)


def hess_m(h, theta0=None, grid=None):
    """Hessian of the log-partition at theta0 applied to h, on the grid.

    Hess[h](y) = 2 int_0^y h (1 - F0) - <h, Phi0> Phi0(y), Phi0(y) = int_0^y (1 - F0),
    with F0 the CDF of the density proportional to exp(theta0).
    """
    grid = grid or UnitGrid(4097)
    hv = _grid_values(h, grid)
    t0 = np.zeros(grid.nodes) if theta0 is None else _grid_values(theta0, grid)
    f = np.exp(t0 - t0.max())
    F = grid.cumint(f)
    F = F / F[-1]
    surv = 1.0 - F
    phi = grid.cumint(surv)
    inner = grid.integral(grid.deriv(hv) * surv)
    return 2.0 * grid.cumint(hv * surv) - inner * phi


def variance_under(h, theta0=None, grid=None):
    """Var of h(X) when X has density proportional to exp(theta0) on [0, 1]."""
    grid = grid or UnitGrid(4097)
    hv = _grid_values(h, grid)
    t0 = np.zeros(grid.nodes) if theta0 is None else _grid_values(theta0, grid)
    f = np.exp(t0 - t0.max())
    f = f / grid.integral(f)
    m = grid.integral(f * hv)
    return grid.integral(f * (hv - m) ** 2)


# ----------------------------------------------------------------- linear regression


def vech_weighted(A):
    """Upper triangle of symmetric matrices, off-diagonals scaled by sqrt(2).

    The Euclidean inner product of two such vectors equals tr(A B).
    """
    A = np.asarray(A, dtype=float)
    K = A.shape[-1]
    iu = np.triu_indices(K)
    scale = np.where(iu[0] == iu[1], 1.0, np.sqrt(2.0))
    return A[..., iu[0], iu[1]] * scale


def unvech_weighted(v, K):
    v = np.asarray(v, dtype=float)
    iu = np.triu_indices(K)
    scale = np.where(iu[0] == iu[1], 1.0, np.sqrt(2.0))
    A = np.zeros((K, K))
    A[iu] = v / scale
    return A + np.triu(A, 1).T


def sine_basis(K, lo=0.0, hi=1.0):
    """psi_k(u) = sqrt(2/L) sin(k pi (u - lo)/L), orthonormal in L^2(lo, hi)."""
    L = hi - lo

    def psi(u):
        u = np.atleast_1d(np.asarray(u, dtype=float))
        return np.sqrt(2.0 / L) * np.sin(np.pi * np.outer((u - lo) / L, np.arange(1, K + 1)))

    return psi


def regression_kl(theta_fn, theta0_fn, sigma, lo=0.0, hi=1.0):
    """(1/2 sigma^2) integral of (theta - theta0)^2 h for the uniform design density h."""
    val = integrate.quad(lambda u: (theta_fn(u) - theta0_fn(u)) ** 2, lo, hi, epsabs=1e-13)[0]
    return float(val / ((hi - lo) * 2 * sigma**2))


@dataclass(frozen=True)
class GaussianPosterior:
    mean: np.ndarray
    cov: np.ndarray


class LinRegModel(StatModel):
    """V = theta(U) + sigma E, U uniform on [lo, hi], theta = sum_k theta_k psi_k.

    The statistic is (mean of psi(U) V, weighted vech of mean psi(U) psi(U)^T);
    g(theta) = (theta / sigma^2, -vech(theta theta^T) / (2 sigma^2)) and M = 0.
    """

    name = "linreg"

    def __init__(self, K=8, sigma=0.5, lo=0.0, hi=1.0, basis: Optional[Callable] = None):
        if not sigma > 0:
            raise InvalidParameter("sigma must be positive")
        if not hi > lo:
            raise InvalidParameter("need hi > lo")
        self.K = self.dim = int(K)
        self.sigma = float(sigma)
        self.lo, self.hi = float(lo), float(hi)
        self.psi = basis or sine_basis(self.K, lo, hi)
        y, w = gauss_legendre_unit(512)
        u = self.lo + (self.hi - self.lo) * y
        P = self.psi(u)
        # design density 1/(hi - lo) times du = (hi - lo) dy
        self.gram = (P * w[:, None]).T @ P
        s2 = self.sigma**2
        K_ = self.K

        def beta(x):
            x = np.atleast_2d(np.asarray(x, dtype=float))
            P = self.psi(x[:, 0])
            outer = np.einsum("mi,mj->mij", P, P)
            return np.hstack([P * x[:, 1:2], vech_weighted(outer)])

        def g(th):
            th = np.atleast_2d(th)
            return np.hstack([th / s2, -vech_weighted(np.einsum("mi,mj->mij", th, th)) / (2 * s2)])

        def base(x):
            x = np.atleast_2d(np.asarray(x, dtype=float))
            inside = (x[:, 0] >= self.lo) & (x[:, 0] <= self.hi)
            return inside / (self.hi - self.lo) * stats.norm.pdf(x[:, 1], scale=self.sigma)

        self.family = ExpFamilySpec(
            beta=beta,
            g=g,
            log_partition=lambda th: np.zeros(np.atleast_2d(th).shape[0]),
            base_density=base,
            sample_space=None,
            dim_stat=K_ + K_ * (K_ + 1) // 2,
            mean_stat=self.mean_stat,
        )

    def mean_stat(self, theta0):
        t0 = np.atleast_1d(np.asarray(theta0, dtype=float))
        return np.concatenate([self.gram @ t0, vech_weighted(self.gram)])

    def split_stat(self, b):
        b = np.asarray(b, dtype=float)
        return b[: self.K], unvech_weighted(b[self.K :], self.K)

    def sample(self, theta0, n, seed=None):
        rng = _rng(seed)
        u = self.lo + (self.hi - self.lo) * rng.random(n)
        v = self.psi(u) @ np.atleast_1d(theta0) + self.sigma * rng.standard_normal(n)
        return np.column_stack([u, v])

    def loglik_data(self, data, thetas):
        data = np.atleast_2d(data)
        th = np.atleast_2d(thetas)
        resid = data[:, 1:2] - self.psi(data[:, 0]) @ th.T
        return -0.5 * np.sum(resid**2, axis=0) / self.sigma**2

    def kl(self, theta, theta0):
        d = np.atleast_1d(theta) - np.atleast_1d(theta0)
        return float(d @ self.gram @ d / (2 * self.sigma**2))

    def kl_quadrature(self, theta, theta0):
        """Double integral over (u, v) of f0 log(f0 / f)."""
        th, t0 = np.atleast_1d(theta), np.atleast_1d(theta0)
        s = self.sigma

        def inner(u):
            m0 = float(self.psi(np.array([u]))[0] @ t0)
            m1 = float(self.psi(np.array([u]))[0] @ th)

            def f(v):
                l0 = stats.norm.logpdf(v, m0, s)
                return np.exp(l0) * (l0 - stats.norm.logpdf(v, m1, s))

            return integrate.quad(f, m0 - 14 * s, m0 + 14 * s, epsabs=1e-14, epsrel=1e-12, limit=200)[0]

        val = integrate.quad(inner, self.lo, self.hi, epsabs=1e-13, epsrel=1e-12, limit=200)[0]
        return float(val / (self.hi - self.lo))

    def density_integral(self, theta):
        th = np.atleast_1d(theta)

        def inner(u):
            m = float(self.psi(np.array([u]))[0] @ th)
            return integrate.quad(lambda v: stats.norm.pdf(v, m, self.sigma), m - 14 * self.sigma, m + 14 * self.sigma)[0]

        return integrate.quad(inner, self.lo, self.hi)[0] / (self.hi - self.lo)

    def posterior_from_stat(self, prior, b, n):
        c, A = self.split_stat(b)
        prec = np.diag(1.0 / prior.lam) + n * A / self.sigma**2
        rhs = prior.m / prior.lam + n * c / self.sigma**2
        try:
            cf = linalg.cho_factor(prec)
        except linalg.LinAlgError as exc:
            raise NumericFailure("posterior precision is not positive definite") from exc
        mean = linalg.cho_solve(cf, rhs)
        cov = linalg.cho_solve(cf, np.eye(self.K))
        return GaussianPosterior(mean, 0.5 * (cov + cov.T))

    def exact_posterior(self, prior, b, n):
        post = self.posterior_from_stat(prior, b, n)
        return post.mean, post.cov

    def project_stat(self, b):
        c, A = self.split_stat(b)
        w, V = linalg.eigh(A)
        A = (V * np.clip(w, 0.0, None)) @ V.T
        return np.concatenate([c, vech_weighted(A)])

    def grad_g_sq(self, thetas):
        # ||Dg(theta)||^2 = (1 + ||theta||^2) / sigma^4, attained along theta
        th = np.atleast_2d(thetas)
        return (1.0 + np.sum(th**2, axis=1)) / self.sigma**4

    def grad_g_moment(self, est):
        # exact for a Gaussian posterior: E|theta|^2 = |mean|^2 + tr cov
        return float((1.0 + est.mean @ est.mean + np.trace(est.cov)) / self.sigma**4)

    def poincare_sq(self, b, n, prior, est=None, theta0=None):
        return gaussian_poincare_sq(self.posterior_from_stat(prior, b, n).cov)


def linreg_suff_posterior(data, prior, model):
    """Exact conjugate Gaussian posterior in coefficient space."""
    data = np.asarray(data, dtype=float)
    if data.size == 0:
        return GaussianPosterior(prior.m.copy(), np.diag(prior.lam))
    data = np.atleast_2d(data)
    P = model.psi(data[:, 0])
    s2 = model.sigma**2
    prec = np.diag(1.0 / prior.lam) + P.T @ P / s2
    rhs = prior.m / prior.lam + P.T @ data[:, 1] / s2
    try:
        cf = linalg.cho_factor(prec)
    except linalg.LinAlgError as exc:
        raise NumericFailure("posterior precision is not positive definite") from exc
    cov = linalg.cho_solve(cf, np.eye(model.K))
    return GaussianPosterior(linalg.cho_solve(cf, rhs), 0.5 * (cov + cov.T))


# ----------------------------------------------------------------- construction from config

MODEL_TYPES = {
    "gaussian": GaussianLocationModel,
    "multinomial": MultinomialModel,
    "finite_logistic": FiniteLogisticModel,
    "infinite_logistic": InfiniteLogisticModel,
    "linreg": LinRegModel,
}


def build_model(kind, **params):
    try:
        cls = MODEL_TYPES[kind]
    except KeyError:
        raise InvalidInput(f"unknown model {kind!r}; choose from {sorted(MODEL_TYPES)}") from None
    return cls(**params)


def build_prior(kind, dim, **params):
    if kind == "gaussian":
        m = np.asarray(params.pop("mean", np.zeros(dim)), dtype=float)
        lam = params.pop("var", 1.0)
        if params:
            raise InvalidInput(f"unknown prior keys {sorted(params)}")
        return KLPrior(np.broadcast_to(m, (dim,)).copy(), np.broadcast_to(np.asarray(lam, float), (dim,)).copy())
    if kind == "kl_power":
        a = params.pop("a")
        scale = params.pop("scale", 1.0)
        m = params.pop("mean", None)
        if params:
            raise InvalidInput(f"unknown prior keys {sorted(params)}")
        return KLPrior.power(dim, a, None if m is None else np.asarray(m, float), scale)
    if kind == "dirichlet":
        alpha = params.pop("alpha", 2.0)
        if params:
            raise InvalidInput(f"unknown prior keys {sorted(params)}")
        return DirichletPrior(dim + 1, alpha)
    if kind == "point":
        theta = params.pop("theta")
        if params:
            raise InvalidInput(f"unknown prior keys {sorted(params)}")
        return PointPrior(np.asarray(theta, float))
    raise InvalidInput(f"unknown prior {kind!r}")
