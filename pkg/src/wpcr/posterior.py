"""Posterior moments by grid quadrature, importance sampling, random-walk
Metropolis, or in closed form for conjugate Gaussian models.

All methods return a :class:`PosteriorEstimate` holding the mean, the p-th
central moment about theta0, the (a p)-th raw moment and diagnostics.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import special

from .errors import InvalidInput, InvalidParameter, NumericFailure, UnsupportedSpec
from .expfam import SuffStat

METHODS = ("grid", "importance", "mcmc", "exact")
MIN_ESS = 50
MAX_RHAT = 1.1
CUTOFF = 40.0  # log-density drop treated as zero mass when zooming the grid


@dataclass(frozen=True)
class SamplerConfig:
    method: str = "grid"
    grid_nodes: int = 128
    zoom_nodes: int = 65
    chains: int = 4
    burn_frac: float = 0.5
    draws: int = 10_000
    importance_draws: int = 20_000
    adapt_batch: int = 50
    seed: int = 0

    def __post_init__(self):
        if self.method not in METHODS:
            raise InvalidParameter(f"method must be one of {METHODS}")
        if self.grid_nodes < 128:
            raise InvalidParameter("grid needs at least 128 nodes per dimension")
        if self.method == "mcmc" and self.draws < 10_000:
            raise InvalidParameter("mcmc needs at least 10^4 retained draws")
        if not 0 < self.burn_frac < 1:
            raise InvalidParameter("burn-in fraction must lie in (0, 1)")
        if self.chains < 2:
            raise InvalidParameter("need at least two chains for rhat")

    def with_seed(self, seed):
        return SamplerConfig(**{**self.__dict__, "seed": seed})


@dataclass
class PosteriorEstimate:
    mean: np.ndarray
    central_moment: float
    raw_moment_ap: float
    cov: np.ndarray
    p: float = 2.0
    a: float = 2.0
    diagnostics: dict = field(default_factory=dict)
    flagged: bool = False
    se_central: float = 0.0

    @property
    def eps(self):
        """W_p distance between the posterior and the point mass at theta0."""
        return self.central_moment ** (1.0 / self.p)


def _target(model, prior, obs):
    """Return (log-likelihood over a batch of parameters, n)."""
    if isinstance(obs, SuffStat):
        b, n = obs.value, obs.n
        return (lambda th: model.stat_loglik(th, b, n)), n
    data = np.asarray(obs)
    n = data.shape[0] if data.size else 0
    if n == 0:
        return (lambda th: np.zeros(np.atleast_2d(th).shape[0])), 0
    return (lambda th: model.loglik_data(data, th)), n


def _weighted_moments(thetas, w, theta0, p, a):
    mean = w @ thetas
    c = thetas - mean
    cov = (c * w[:, None]).T @ c
    dist = np.linalg.norm(thetas - theta0, axis=1) ** p
    central = float(w @ dist)
    raw = float(w @ np.linalg.norm(thetas, axis=1) ** (a * p))
    return mean, cov, central, raw, dist


def _degenerate(prior, theta0, p, a):
    t = prior.theta
    return PosteriorEstimate(
        t.copy(),
        float(np.linalg.norm(t - theta0) ** p),
        float(np.linalg.norm(t) ** (a * p)),
        np.zeros((t.size, t.size)),
        p,
        a,
        {"method": "point-mass"},
    )


def _default_chart(prior, dim):
    sd = np.sqrt(np.asarray(prior.variances, dtype=float))
    lo = prior.mean - 12 * sd
    hi = prior.mean + 12 * sd
    return lo, hi, (lambda z: z), (lambda z: np.zeros(z.shape[0]))


def _tensor(axes):
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.column_stack([m.ravel() for m in mesh])


def posterior_grid(model, prior, obs, p=2.0, theta0=None, cfg=SamplerConfig(), a=2.0):
    """Tensor Gauss-Legendre quadrature on a box zoomed onto the posterior mass."""
    theta0 = np.atleast_1d(np.asarray(theta0 if theta0 is not None else prior.mean, dtype=float))
    if getattr(prior, "degenerate", False):
        return _degenerate(prior, theta0, p, a)
    d = model.dim
    if d > 2:
        raise InvalidInput("grid quadrature supports at most two dimensions")
    loglik, n = _target(model, prior, obs)
    lo, hi, to_theta, log_jac = model.chart or _default_chart(prior, d)
    lo, hi = np.array(lo, dtype=float), np.array(hi, dtype=float)

    def logpost(z):
        th = to_theta(z)
        with np.errstate(divide="ignore", invalid="ignore"):
            val = loglik(th) + prior.logpdf(th) + log_jac(z)
        return np.where(np.isnan(val), -np.inf, val)

    for _ in range(10):
        axes = [np.linspace(lo[i], hi[i], cfg.zoom_nodes) for i in range(d)]
        z = _tensor(axes)
        lp = logpost(z)
        top = np.max(lp)
        if not np.isfinite(top):
            raise NumericFailure("posterior has no finite mass on the zoom grid")
        keep = z[lp > top - CUTOFF]
        step = (hi - lo) / (cfg.zoom_nodes - 1)
        new_lo = np.maximum(lo, keep.min(axis=0) - step)
        new_hi = np.minimum(hi, keep.max(axis=0) + step)
        shrink = np.max((new_hi - new_lo) / (hi - lo))
        lo, hi = new_lo, new_hi
        if shrink > 0.8:
            break

    x, w = np.polynomial.legendre.leggauss(cfg.grid_nodes)
    axes, weights = [], []
    for i in range(d):
        half = 0.5 * (hi[i] - lo[i])
        axes.append(lo[i] + half * (x + 1.0))
        weights.append(half * w)
    z = _tensor(axes)
    wq = np.prod(_tensor(weights), axis=1)
    lp = logpost(z)
    top = np.max(lp)
    if not np.isfinite(top):
        raise NumericFailure("all grid weights underflow")
    wt = wq * np.exp(lp - top)
    total = wt.sum()
    if not total > 0:
        raise NumericFailure("all grid weights underflow")
    wt /= total
    thetas = to_theta(z)
    mean, cov, central, raw, _ = _weighted_moments(thetas, wt, theta0, p, a)
    diag = {"method": "grid", "grid_size": int(z.shape[0]), "box": (lo.tolist(), hi.tolist()), "n": n}
    return PosteriorEstimate(mean, central, raw, cov, p, a, diag)


def importance_weights(loglik_values):
    """Self-normalized weights and effective sample size from log-weights."""
    lw = np.asarray(loglik_values, dtype=float)
    w = np.exp(lw - special.logsumexp(lw))
    return w, float(1.0 / np.sum(w * w))


def posterior_importance(model, prior, obs, p=2.0, theta0=None, cfg=SamplerConfig(), a=2.0):
    """Prior draws reweighted by the likelihood."""
    theta0 = np.atleast_1d(np.asarray(theta0 if theta0 is not None else prior.mean, dtype=float))
    if getattr(prior, "degenerate", False):
        return _degenerate(prior, theta0, p, a)
    loglik, n = _target(model, prior, obs)
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0xA11]))
    thetas = prior.sample(rng, cfg.importance_draws)
    lw = loglik(thetas)
    if not np.any(np.isfinite(lw)):
        raise NumericFailure("every importance weight is zero")
    w, ess = importance_weights(lw)
    keep = w >= 1e-15
    w = w[keep] / w[keep].sum()
    thetas = thetas[keep]
    mean, cov, central, raw, dist = _weighted_moments(thetas, w, theta0, p, a)
    se = float(np.sqrt(np.sum(w * w * (dist - central) ** 2)))
    flagged = ess < MIN_ESS
    diag = {"method": "importance", "ess": ess, "draws": cfg.importance_draws, "n": n}
    return PosteriorEstimate(mean, central, raw, cov, p, a, diag, flagged, se)


# ----------------------------------------------------------------- MCMC diagnostics


def _autocov(x):
    """Autocovariance of each row, via FFT."""
    m = x.shape[-1]
    size = 1 << (2 * m - 1).bit_length()
    c = x - x.mean(axis=-1, keepdims=True)
    f = np.fft.rfft(c, size, axis=-1)
    ac = np.fft.irfft(f * np.conj(f), size, axis=-1)[..., :m]
    return ac / m


def split_rhat(x):
    """Split potential scale reduction for draws shaped (chains, draws)."""
    x = np.asarray(x, dtype=float)
    half = x.shape[1] // 2
    s = np.concatenate([x[:, :half], x[:, half : 2 * half]], axis=0)
    m = s.shape[1]
    W = np.mean(np.var(s, axis=1, ddof=1))
    B = m * np.var(np.mean(s, axis=1), ddof=1)
    if W == 0:
        return 1.0
    var_plus = (m - 1) / m * W + B / m
    return float(np.sqrt(var_plus / W))


def effective_sample_size(x):
    """Multi-chain ESS with Geyer's initial monotone sequence."""
    x = np.asarray(x, dtype=float)
    chains, m = x.shape
    acov = _autocov(x)
    W = np.mean(acov[:, 0]) * m / (m - 1)
    if W == 0:
        return float(chains * m)
    B = m * np.var(np.mean(x, axis=1), ddof=1) if chains > 1 else 0.0
    var_plus = (m - 1) / m * W + B / m
    rho = 1.0 - (W - np.mean(acov, axis=0)) / var_plus
    rho[0] = 1.0
    tau, prev = -1.0, np.inf
    for t in range(0, m - 1, 2):
        pair = rho[t] + rho[t + 1]
        if pair < 0:
            break
        pair = min(pair, prev)
        tau += 2.0 * pair
        prev = pair
    return float(chains * m / max(tau, 1.0 / np.log10(chains * m)))


def posterior_mcmc(model, prior, obs, p=2.0, theta0=None, cfg=SamplerConfig(method="mcmc"), a=2.0):
    """Random-walk Metropolis, several chains, adaptation confined to burn-in."""
    theta0 = np.atleast_1d(np.asarray(theta0 if theta0 is not None else prior.mean, dtype=float))
    if getattr(prior, "degenerate", False):
        return _degenerate(prior, theta0, p, a)
    loglik, n = _target(model, prior, obs)
    d, C = model.dim, cfg.chains
    keep_per_chain = -(-cfg.draws // C)
    total = int(np.ceil(keep_per_chain / (1.0 - cfg.burn_frac)))
    burn = total - keep_per_chain

    def target(th):
        with np.errstate(divide="ignore", invalid="ignore"):
            v = loglik(th) + prior.logpdf(th)
        return np.where(np.isnan(v), -np.inf, v)

    streams = [np.random.default_rng(np.random.SeedSequence([cfg.seed, c])) for c in range(C)]
    Z = np.stack([s.standard_normal((total, d)) for s in streams], axis=1)
    logU = np.log(np.stack([s.random(total) for s in streams], axis=1))

    base = 2.38 / np.sqrt(d) * np.sqrt(np.asarray(prior.variances, dtype=float))
    log_scale = 0.0
    cur = np.tile(np.asarray(prior.mean, dtype=float), (C, 1))
    lp = target(cur)
    if not np.all(np.isfinite(lp)):
        raise NumericFailure("log posterior is not finite at the prior mean")
    trace = np.empty((total, C, d))
    accepted = np.zeros(C)
    batch_acc = 0
    checkpoints = {burn // 4, burn // 2, (3 * burn) // 4}
    for t in range(total):
        prop = cur + np.exp(log_scale) * base * Z[t]
        lpp = target(prop)
        ok = logU[t] < lpp - lp
        cur = np.where(ok[:, None], prop, cur)
        lp = np.where(ok, lpp, lp)
        trace[t] = cur
        if t < burn:
            batch_acc += int(ok.sum())
            if (t + 1) % cfg.adapt_batch == 0:
                rate = batch_acc / (cfg.adapt_batch * C)
                log_scale += 3.0 * (rate - 0.234)
                batch_acc = 0
            if t + 1 in checkpoints and t + 1 >= 8:
                window = trace[max(0, t + 1 - burn // 4) : t + 1].reshape(-1, d)
                sd = window.std(axis=0)
                if np.all(sd > 0):
                    base = 2.38 / np.sqrt(d) * sd
                    log_scale = 0.0
        else:
            accepted += ok
    post = trace[burn:]  # (keep, C, d)
    per_chain = np.transpose(post, (1, 0, 2))  # (C, keep, d)
    flat = post.reshape(-1, d)
    w = np.full(flat.shape[0], 1.0 / flat.shape[0])
    mean, cov, central, raw, dist = _weighted_moments(flat, w, theta0, p, a)
    rhat = max(split_rhat(per_chain[:, :, j]) for j in range(d))
    ess_coord = min(effective_sample_size(per_chain[:, :, j]) for j in range(d))
    dist_chains = np.linalg.norm(per_chain - theta0, axis=2) ** p
    ess_f = effective_sample_size(dist_chains)
    se = float(np.std(dist) / np.sqrt(max(ess_f, 1.0)))
    acc = float(accepted.sum() / (C * keep_per_chain))
    diag = {
        "method": "mcmc",
        "rhat": rhat,
        "ess": min(ess_coord, ess_f),
        "acceptance": acc,
        "proposal_scale": (np.exp(log_scale) * base).tolist(),
        "chains": C,
        "draws": int(flat.shape[0]),
        "n": n,
    }
    flagged = rhat > MAX_RHAT or diag["ess"] < MIN_ESS
    return PosteriorEstimate(mean, central, raw, cov, p, a, diag, flagged, se)


def gaussian_norm_moment(mean, cov, q, seed=0, draws=200_000):
    """E||X||^q for X ~ N(mean, cov); closed form for q in {2, 4}."""
    mean = np.asarray(mean, dtype=float)
    cov = np.asarray(cov, dtype=float)
    s = np.trace(cov) + mean @ mean
    if q == 2:
        return float(s)
    if q == 4:
        return float(s * s + 2 * np.trace(cov @ cov) + 4 * mean @ cov @ mean)
    rng = np.random.default_rng(seed)
    L = np.linalg.cholesky(cov + 1e-300 * np.eye(mean.size))
    x = mean + rng.standard_normal((draws, mean.size)) @ L.T
    return float(np.mean(np.linalg.norm(x, axis=1) ** q))


def posterior_exact(model, prior, obs, p=2.0, theta0=None, cfg=SamplerConfig(), a=2.0):
    """Closed-form moments for conjugate Gaussian models."""
    theta0 = np.atleast_1d(np.asarray(theta0 if theta0 is not None else prior.mean, dtype=float))
    if getattr(prior, "degenerate", False):
        return _degenerate(prior, theta0, p, a)
    if not hasattr(model, "exact_posterior"):
        raise UnsupportedSpec(f"model {model.name} has no closed-form posterior")
    if isinstance(obs, SuffStat):
        b, n = obs.value, obs.n
    else:
        data = np.asarray(obs)
        if data.size == 0:
            b, n = model.s_zero(prior.mean), 0
        else:
            st = model.suff_stat(data)
            b, n = st.value, st.n
    res = model.exact_posterior(prior, b, n)
    if res is None:
        raise UnsupportedSpec("prior is not conjugate for this model")
    mean, cov = res
    central = gaussian_norm_moment(mean - theta0, cov, p, cfg.seed)
    raw = gaussian_norm_moment(mean, cov, a * p, cfg.seed)
    return PosteriorEstimate(mean, central, raw, cov, p, a, {"method": "exact", "n": n})


_DISPATCH = {
    "grid": posterior_grid,
    "importance": posterior_importance,
    "mcmc": posterior_mcmc,
    "exact": posterior_exact,
}


def compute_posterior(model, prior, obs, p=2.0, theta0=None, cfg: Optional[SamplerConfig] = None, a=2.0):
    cfg = cfg or SamplerConfig()
    return _DISPATCH[cfg.method](model, prior, obs, p, theta0, cfg, a)
