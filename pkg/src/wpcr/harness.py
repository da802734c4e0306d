"""Monte Carlo experiments: contraction-rate estimates, tail probabilities,
Glivenko-Cantelli rates, the four-term bound, and log-log rate fits.

Every replication is a pure function of (config, ladder index, replication
index); its random streams come from a ``SeedSequence`` keyed on that triple,
so results do not depend on the number of workers.
"""

from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from typing import Optional

import numpy as np
from scipy import integrate

from .errors import InvalidInput, InvalidParameter, NumericFailure, RunFailure
from .expfam import SuffStat
from .laplace import PcrBoundTerms, SpectralDecay, assemble_pcr_bound, gaussian_ratio_series
from .measure import EmpiricalMeasure, wasserstein_1d
from .models import InfiniteLogisticModel, build_model, build_prior, pinelis_tail
from .poincare import InfiniteConsts, infinite_bound, l0n_estimate
from .posterior import SamplerConfig, compute_posterior

MAX_FLAGGED = 0.2
MIN_TAIL_REPS = 200


@dataclass(frozen=True)
class ExperimentConfig:
    model: str
    theta0: tuple
    n_ladder: tuple
    model_params: dict = field(default_factory=dict)
    prior: dict = field(default_factory=lambda: {"kind": "gaussian"})
    replications: int = 200
    p: float = 2.0
    a: float = 2.0
    delta: Optional[float] = None  # None: calibrate so that J_n is about 1/2 at the first n
    q: float = 0.25
    sampler: SamplerConfig = SamplerConfig()
    seed: int = 0
    output: Optional[str] = None
    path: str = "stat"  # "stat": posterior from the sufficient statistic; "data": from raw samples
    tail_replications: int = MIN_TAIL_REPS
    bootstrap: int = 1000
    perturbations: int = 4
    bound_constants: dict = field(default_factory=dict)  # InfiniteConsts overrides for the infinite logistic model

    def __post_init__(self):
        ladder = tuple(int(n) for n in self.n_ladder)
        if not ladder or any(n <= 0 for n in ladder):
            raise InvalidParameter("n_ladder must hold positive integers")
        if any(b <= a for a, b in zip(ladder, ladder[1:])):
            raise InvalidParameter("n_ladder must be strictly ascending")
        if self.replications < 20:
            raise InvalidParameter("need at least 20 replications")
        if not 0 <= self.q < 0.5:
            raise InvalidParameter("q must lie in [0, 1/2)")
        if self.delta is not None and not self.delta > 0:
            raise InvalidParameter("delta must be positive")
        if self.path not in ("stat", "data"):
            raise InvalidParameter("path must be 'stat' or 'data'")
        if self.tail_replications < MIN_TAIL_REPS:
            raise InvalidParameter(f"tail estimates need at least {MIN_TAIL_REPS} replications")
        if not (self.a > 1 and self.p >= 1):
            raise InvalidParameter("need a > 1 and p >= 1")
        object.__setattr__(self, "n_ladder", ladder)
        object.__setattr__(self, "theta0", tuple(float(t) for t in np.atleast_1d(self.theta0)))
        if isinstance(self.sampler, dict):
            object.__setattr__(self, "sampler", _sampler_from_dict(self.sampler))
        unknown = set(self.bound_constants) - {f.name for f in fields(InfiniteConsts)}
        if unknown:
            raise InvalidInput(f"unknown bound constants {sorted(unknown)}")

    def infinite_consts(self):
        return InfiniteConsts(**self.bound_constants)

    @classmethod
    def from_dict(cls, raw):
        known = {f.name for f in fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise InvalidInput(f"unknown config keys {sorted(unknown)}")
        return cls(**raw)

    @classmethod
    def from_json(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self):
        out = asdict(self)
        out["sampler"] = asdict(self.sampler)
        return out

    def build(self):
        model = build_model(self.model, **self.model_params)
        prior_params = dict(self.prior)
        kind = prior_params.pop("kind", "gaussian")
        prior = build_prior(kind, model.dim, **prior_params)
        theta0 = np.asarray(self.theta0, dtype=float)
        if theta0.shape != (model.dim,):
            raise InvalidInput(f"theta0 has length {theta0.size}, model dimension is {model.dim}")
        return model, prior, theta0

    def delta_n(self, n, delta):
        return float(delta * n ** (-self.q))


def _sampler_from_dict(raw):
    known = {f.name for f in fields(SamplerConfig)}
    unknown = set(raw) - known
    if unknown:
        raise InvalidInput(f"unknown sampler keys {sorted(unknown)}")
    return SamplerConfig(**raw)


def _map(fn, args, workers):
    if workers and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, args, chunksize=max(1, len(args) // (4 * workers))))
    return [fn(x) for x in args]


# ----------------------------------------------------------------- replications


@dataclass
class Replication:
    n: int
    replication: int
    seed: int
    eps: float
    raw_moment_ap: float
    stat_dev: float
    stat: np.ndarray
    flagged: bool


def _streams(cfg, n_index, rep):
    data_seed, post_seed = np.random.SeedSequence([cfg.seed, n_index, rep]).generate_state(2)
    return int(data_seed), int(post_seed)


def replicate(cfg, n_index, rep, built=None):
    """One replication at the ``n_index``-th ladder entry."""
    model, prior, theta0 = built or cfg.build()
    n = cfg.n_ladder[n_index]
    data_seed, post_seed = _streams(cfg, n_index, rep)
    data = model.sample(theta0, n, np.random.default_rng(data_seed))
    stat = model.suff_stat(data)
    s0 = model.s_zero(theta0)
    obs = stat if cfg.path == "stat" else data
    try:
        est = compute_posterior(model, prior, obs, cfg.p, theta0, cfg.sampler.with_seed(post_seed), cfg.a)
        eps, raw, flagged = est.eps, est.raw_moment_ap, est.flagged
    except NumericFailure:
        eps, raw, flagged = np.nan, np.nan, True
    return Replication(n, rep, data_seed, float(eps), float(raw), model.stat_norm(stat.value - s0), stat.value, bool(flagged))


def _replicate_task(args):
    cfg, n_index, rep = args
    return replicate(cfg, n_index, rep)


def run_replications(cfg, n_index, workers=1):
    reps = _map(_replicate_task, [(cfg, n_index, r) for r in range(cfg.replications)], workers)
    flagged = sum(r.flagged for r in reps) / len(reps)
    if flagged > MAX_FLAGGED:
        raise RunFailure(f"{flagged:.0%} of replications at n = {cfg.n_ladder[n_index]} were flagged")
    return reps


def _mean_se(values):
    v = np.asarray(values, dtype=float)
    v = v[np.isfinite(v)]
    return float(v.mean()), float(v.std(ddof=1) / np.sqrt(v.size))


def estimate_epsilon_n(cfg, n, workers=1):
    """Replication mean of W_p(posterior, point mass at theta0) and its standard error."""
    if n not in cfg.n_ladder:
        cfg = ExperimentConfig.from_dict({**cfg.to_dict(), "n_ladder": (n,)})
    reps = run_replications(cfg, cfg.n_ladder.index(n), workers)
    return _mean_se([r.eps for r in reps])


def stat_deviations(cfg, n, replications, built=None):
    """||S_n - S_0|| over independent samples of size n (seeded by n itself)."""
    model, _, theta0 = built or cfg.build()
    s0 = model.s_zero(theta0)
    out = np.empty(replications)
    for r in range(replications):
        rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, n, r, 0x7A11]))
        out[r] = model.stat_norm(model.suff_stat(model.sample(theta0, n, rng)).value - s0)
    return out


def tail_probability(cfg, n, delta_n, replications=None, built=None):
    """Monte Carlo estimate of J_n = P(||S_n - S_0|| >= delta_n)."""
    reps = replications or cfg.tail_replications
    if reps < MIN_TAIL_REPS:
        raise InvalidParameter(f"tail estimates need at least {MIN_TAIL_REPS} replications")
    dev = stat_deviations(cfg, n, reps, built)
    return float(np.mean(dev >= delta_n))


def calibrate_delta(cfg, built=None):
    """delta with J_n(delta n^-q) = 1/2 at the smallest n."""
    n = cfg.n_ladder[0]
    dev = stat_deviations(cfg, n, cfg.tail_replications, built)
    return float(np.median(dev) * n**cfg.q)


# ----------------------------------------------------------------- rate fits


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    r_squared: float
    bootstrap_ci90: tuple
    points: tuple


def _ols(x, y):
    A = np.column_stack([x, np.ones_like(x)])
    (slope, intercept), *_ = np.linalg.lstsq(A, y, rcond=None)
    return float(slope), float(intercept)


def fit_rate(points, bootstrap=1000, replicates=None, seed=0):
    """Least-squares line through (log n, log eps) with a bootstrap 90% interval.

    ``replicates`` optionally holds the per-replication values behind each
    point; the bootstrap then resamples replications within each n. Otherwise
    residuals are resampled.
    """
    pts = [(float(n), float(e)) for n, e in points]
    if len(pts) < 4:
        raise InvalidInput("need at least 4 points to fit a rate")
    n = np.array([p[0] for p in pts])
    eps = np.array([p[1] for p in pts])
    if np.any(n <= 0) or np.any(~(eps > 0)):
        raise InvalidInput("n and eps must be positive")
    x, y = np.log(n), np.log(eps)
    slope, intercept = _ols(x, y)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 if ss_tot <= 1e-24 else max(0.0, 1.0 - float(np.sum(resid**2)) / ss_tot)
    lo = hi = slope
    if bootstrap:
        rng = np.random.default_rng(seed)
        slopes = np.empty(bootstrap)
        if replicates is not None:
            reps = [np.asarray(r, dtype=float) for r in replicates]
            reps = [r[np.isfinite(r)] for r in reps]
            for i in range(bootstrap):
                means = [r[rng.integers(0, r.size, r.size)].mean() for r in reps]
                slopes[i] = _ols(x, np.log(np.maximum(means, 1e-300)))[0]
        else:
            fitted = y - resid
            for i in range(bootstrap):
                slopes[i] = _ols(x, fitted + rng.choice(resid, resid.size))[0]
        lo, hi = np.percentile(slopes, [5.0, 95.0])
        lo, hi = min(float(lo), slope), max(float(hi), slope)
    return RateFit(slope, intercept, r2, (lo, hi), tuple(zip(x.tolist(), y.tolist())))


# ----------------------------------------------------------------- Glivenko-Cantelli


@dataclass(frozen=True)
class GcEstimate:
    n: int
    mean: float
    se: float
    values: np.ndarray


def gc_estimates(mu0, n_ladder, replications=100, p=2.0, seed=0):
    """E[W_p(mu0, empirical measure of n draws)] by Monte Carlo, per n."""
    out = []
    for i, n in enumerate(n_ladder):
        vals = np.empty(replications)
        for r in range(replications):
            rng = np.random.default_rng(np.random.SeedSequence([seed, i, r]))
            sample = mu0.quantile(rng.random(int(n)))
            vals[r] = wasserstein_1d(EmpiricalMeasure(sample), mu0, p)
        m, se = _mean_se(vals)
        out.append(GcEstimate(int(n), m, se, vals))
    return out


def gc_rate(mu0, n_ladder, replications=100, p=2.0, seed=0, bootstrap=1000):
    est = gc_estimates(mu0, n_ladder, replications, p, seed)
    return fit_rate([(e.n, e.mean) for e in est], bootstrap, [e.values for e in est], seed)


def single_atom_expectation(mu0, p=2.0):
    """E[W_p(mu0, delta_X)] for X ~ mu0: the integral over x of (int |q(u) - x|^p du)^(1/p) dmu0."""
    u, w = np.polynomial.legendre.leggauss(400)
    u, w = 0.5 * (u + 1), 0.5 * w
    q = mu0.quantile(u)
    inner = np.array([np.sum(w * np.abs(q - x) ** p) ** (1.0 / p) for x in q])
    return float(np.sum(w * inner))


# ----------------------------------------------------------------- the four-term bound


@dataclass
class LadderPoint:
    n: int
    eps_hat: float
    eps_se: float
    delta_n: float
    jn: float
    jn_bound: Optional[float]
    gc: float
    L0n: float
    terms: PcrBoundTerms
    terms_tail_bound: Optional[PcrBoundTerms]
    flagged_fraction: float
    eps_values: np.ndarray = field(repr=False)


@dataclass
class PcrRunResult:
    config: ExperimentConfig
    delta: float
    ladder: list
    replications: list
    rate_fit: Optional[RateFit]
    bound_fit: Optional[RateFit]


def _stat_directions(stats, k):
    S = np.asarray(stats, dtype=float)
    if S.shape[0] < 2:
        return np.zeros((0, S.shape[1]))
    C = np.cov(S, rowvar=False).reshape(S.shape[1], S.shape[1])
    w, V = np.linalg.eigh(C)
    order = np.argsort(w)[::-1][:k]
    return V[:, order].T


def lipschitz_estimate(cfg, n, n_index, delta_n, stats, built):
    """n c2^2 sqrt(E|Dg|^2), maximized over S_0 and points delta_n away along the
    leading principal directions of the replicated statistics."""
    model, prior, theta0 = built
    s0 = model.s_zero(theta0)
    candidates = [s0]
    for v in _stat_directions(stats, cfg.perturbations):
        candidates += [model.project_stat(s0 + delta_n * v), model.project_stat(s0 - delta_n * v)]
    best = 0.0
    for j, b in enumerate(candidates):
        seed = int(np.random.SeedSequence([cfg.seed, n_index, 0xB0, j]).generate_state(1)[0])
        est = compute_posterior(model, prior, SuffStat(b, n), cfg.p, theta0, cfg.sampler.with_seed(seed), cfg.a)
        if isinstance(model, InfiniteLogisticModel):
            c2sq = model.poincare_sq(b, n, prior, est, theta0=theta0, consts=cfg.infinite_consts())
        else:
            c2sq = model.poincare_sq(b, n, prior, est, theta0=theta0)
        best = max(best, l0n_estimate(n, c2sq, model.grad_g_moment(est)))
    return best


def shrinkage_term(cfg, n, n_index, built):
    """W_p distance to theta0 of the posterior evaluated at the exact statistic S_0."""
    model, prior, theta0 = built
    seed = int(np.random.SeedSequence([cfg.seed, n_index, 0x50]).generate_state(1)[0])
    est = compute_posterior(model, prior, SuffStat(model.s_zero(theta0), n), cfg.p, theta0, cfg.sampler.with_seed(seed), cfg.a)
    return est.eps


def run_ladder(cfg, workers=1, decompose=True):
    """Replications at every n, optionally with the four bound terms."""
    built = cfg.build()
    model, prior, theta0 = built
    delta = cfg.delta if cfg.delta is not None else calibrate_delta(cfg, built)
    ladder, rows = [], []
    for i, n in enumerate(cfg.n_ladder):
        reps = run_replications(cfg, i, workers)
        rows.extend(reps)
        eps = np.array([r.eps for r in reps])
        eps_hat, se = _mean_se(eps)
        gc = float(np.mean([r.stat_dev for r in reps]))
        dn = cfg.delta_n(n, delta)
        flagged = float(np.mean([r.flagged for r in reps]))
        if not decompose:
            ladder.append(LadderPoint(n, eps_hat, se, dn, np.nan, None, gc, np.nan, None, None, flagged, eps))
            continue
        jn = tail_probability(cfg, n, dn, built=built)
        jn_bound = model.stat_tail_bound(n, dn, theta0)
        L0n = lipschitz_estimate(cfg, n, i, dn, [r.stat for r in reps], built)
        t1 = shrinkage_term(cfg, n, i, built)
        raw = float(np.nanmean([r.raw_moment_ap for r in reps]))
        norm0 = float(np.linalg.norm(theta0))
        terms = assemble_pcr_bound(t1, L0n, gc, jn, raw, cfg.a, cfg.p, norm0)
        terms_b = None if jn_bound is None else assemble_pcr_bound(t1, L0n, gc, jn_bound, raw, cfg.a, cfg.p, norm0)
        ladder.append(LadderPoint(n, eps_hat, se, dn, jn, jn_bound, gc, L0n, terms, terms_b, flagged, eps))
    rate_fit = bound_fit = None
    if len(ladder) >= 4:
        rate_fit = fit_rate([(pt.n, pt.eps_hat) for pt in ladder], cfg.bootstrap, [pt.eps_values for pt in ladder], cfg.seed)
        if decompose:
            bound_fit = fit_rate([(pt.n, pt.terms.total) for pt in ladder], 0)
    return PcrRunResult(cfg, delta, ladder, rows, rate_fit, bound_fit)


def run_decomposition(cfg, workers=1):
    return run_ladder(cfg, workers, decompose=True)


def bound_dominance(result):
    """Fraction of (n, replication) cells with eps <= bound total."""
    totals = {pt.n: pt.terms.total for pt in result.ladder}
    hits = [r.eps <= totals[r.n] for r in result.replications if np.isfinite(r.eps)]
    return float(np.mean(hits))


def tail_to_main_ratio(terms):
    return (terms.term2_tail_scaled + terms.term3_posterior_tail) / (terms.term1_shrinkage + terms.term4_lipschitz)


# ----------------------------------------------------------------- infinite logistic, analytic curve


def infinite_logistic_spectrum(model, theta0, a, omega_c=None):
    """Power-law spectral data: lambda_k = k^-(1+a), gamma_k = e^-osc / (k pi)^2."""
    gscale = np.exp(-model.osc(theta0)) / np.pi**2
    return SpectralDecay.power(a, 2.0, omega_c, gamma_scale=gscale)


def spectral_bound_curve(model, theta0, spec, n_values, delta=0.5, a=2.0, p=2.0, consts=InfiniteConsts()):
    """The four-term bound from the spectral formulas alone, unknown constants at 1.

    Shrinkage is the Gaussian Laplace ratio sqrt(series1 + series2); the
    Lipschitz term uses the infinite-dimensional Poincare bound with |Dg| = 1
    and the exact statistic spread sqrt(tr Cov(beta) / n).
    """
    if not isinstance(model, InfiniteLogisticModel):
        raise InvalidInput("the spectral curve is defined for the infinite logistic model")
    theta0 = np.asarray(theta0, dtype=float)
    trace_cov = model.stat_cov_trace(theta0)
    D = model._beta_range(theta0)
    out = []
    for n in n_values:
        s1, s2 = gaussian_ratio_series(n, spec)
        L0n = l0n_estimate(n, infinite_bound(n, spec, consts), 1.0)
        dev = np.sqrt(trace_cov / n)
        tail = pinelis_tail(n, delta, D)
        raw = (float(theta0 @ theta0) + s1) ** (a * p / 2.0)
        out.append(assemble_pcr_bound(np.sqrt(s1 + s2), L0n, dev, tail, raw, a, p, float(np.linalg.norm(theta0))))
    return out


# ----------------------------------------------------------------- conjugate regression oracle


def _expected_sqrt(t, mu, C):
    """E sqrt(t + |Z|^2) for Z ~ N(mu, C), via sqrt(x) = (1/(2 sqrt pi)) int (1 - e^{-sx}) s^{-3/2} ds."""
    w, V = np.linalg.eigh(0.5 * (C + C.T))
    w = np.clip(w, 0.0, None)
    m2 = (V.T @ mu) ** 2

    def log_laplace(s):
        f = 1.0 + 2.0 * s * w
        return -s * t - np.sum(0.5 * np.log(f) + s * m2 / f)

    def integrand(u):
        # s = u^2 / (1 - u)^2 maps [0, 1) onto [0, inf)
        if u >= 1.0:
            return 0.0
        s = (u / (1.0 - u)) ** 2
        ds = 2.0 * u / (1.0 - u) ** 3
        return -np.expm1(log_laplace(s)) * s**-1.5 * ds if s > 0 else 0.0

    val, _ = integrate.quad(integrand, 0.0, 1.0, epsabs=1e-13, epsrel=1e-11, limit=400)
    return float(val / (2.0 * np.sqrt(np.pi)))


def conjugate_eps_given_design(model, prior, theta0, u):
    """E[(tr Sigma_post + |mean_post - theta0|^2)^(1/2) | design points u] for linear regression."""
    P = model.psi(np.asarray(u, dtype=float))
    s2 = model.sigma**2
    prec = np.diag(1.0 / prior.lam) + P.T @ P / s2
    cov = np.linalg.inv(prec)
    cov = 0.5 * (cov + cov.T)
    mu = cov @ (prior.m / prior.lam) + cov @ (P.T @ P) @ theta0 / s2 - theta0
    G = cov @ P.T / model.sigma
    return _expected_sqrt(float(np.trace(cov)), mu, G @ G.T)


def conjugate_eps_expectation(model, prior, theta0, n, designs=200, seed=0):
    """Average of :func:`conjugate_eps_given_design` over independent uniform designs."""
    vals = np.empty(designs)
    for r in range(designs):
        rng = np.random.default_rng(np.random.SeedSequence([seed, n, r, 0xD5]))
        u = model.lo + (model.hi - model.lo) * rng.random(n)
        vals[r] = conjugate_eps_given_design(model, prior, theta0, u)
    return _mean_se(vals)


# ----------------------------------------------------------------- output


RUN_HEADER = "n,replication,eps,term1,term2,term3,term4,bound_total,jn,gc,seed"
SUMMARY_HEADER = "n,eps_mean,eps_se,slope,ci_lo,ci_hi"


def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    return "" if np.isnan(x) else repr(x)


def run_rows(result):
    by_n = {pt.n: pt for pt in result.ladder}
    lines = [RUN_HEADER]
    for r in result.replications:
        pt = by_n[r.n]
        t = pt.terms
        vals = [r.n, r.replication, r.eps]
        vals += [None] * 5 if t is None else [t.term1_shrinkage, t.term2_tail_scaled, t.term3_posterior_tail, t.term4_lipschitz, t.total]
        vals += [pt.jn, r.stat_dev, r.seed]
        lines.append(",".join(_fmt(v) for v in vals))
    return lines


def summary_rows(result):
    fit = result.rate_fit
    lines = [SUMMARY_HEADER]
    for pt in result.ladder:
        tail = [None, None, None] if fit is None else [fit.slope, *fit.bootstrap_ci90]
        lines.append(",".join(_fmt(v) for v in [pt.n, pt.eps_hat, pt.eps_se, *tail]))
    return lines


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.floating, float)):
        return None if np.isnan(x) else float(x)
    if isinstance(x, np.integer):
        return int(x)
    return x


def result_to_dict(result):
    def fit(f):
        return None if f is None else asdict(f)

    ladder = []
    for pt in result.ladder:
        d = {k: getattr(pt, k) for k in ("n", "eps_hat", "eps_se", "delta_n", "jn", "jn_bound", "gc", "L0n", "flagged_fraction")}
        d["terms"] = None if pt.terms is None else asdict(pt.terms)
        d["terms_tail_bound"] = None if pt.terms_tail_bound is None else asdict(pt.terms_tail_bound)
        d["indicative"] = True
        ladder.append(d)
    reps = [
        {"n": r.n, "replication": r.replication, "seed": r.seed, "eps": r.eps, "stat_dev": r.stat_dev, "flagged": r.flagged}
        for r in result.replications
    ]
    return _jsonable(
        {
            "config": result.config.to_dict(),
            "delta": result.delta,
            "ladder": ladder,
            "rate_fit": fit(result.rate_fit),
            "bound_fit": fit(result.bound_fit),
            "replications": reps,
        }
    )
