"""Rate formulas built from the spectral data of a Gaussian prior.

The sequences are lambda_k (prior covariance eigenvalues), gamma_k (Fisher
operator eigenvalues), eta_k (a lower bound for the Hessian of the KL kernel),
omega_k (coefficients of theta0 minus the prior mean) and m_k (prior mean).
For Gaussian likelihood surrogates the Laplace ratio is the explicit pair of
series computed by :func:`gaussian_ratio_series`.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
from scipy import linalg, special

from .errors import InvalidInput, InvalidParameter, InvalidSpec, UnsupportedSpec

REL_TOL = 1e-12
SCAN_PATIENCE = 64
EXP_FLOOR = 1e-300


@dataclass(frozen=True)
class PowerLaw:
    """The sequence ``scale * k**(-exponent)`` for k = 1, 2, ..."""

    exponent: float
    scale: float = 1.0

    def __call__(self, k):
        return self.scale * np.asarray(k, dtype=float) ** (-self.exponent)


@dataclass(frozen=True)
class ExpLaw:
    """The sequence ``scale * exp(-k**r)`` for k = 1, 2, ..."""

    r: float = 1.0
    scale: float = 1.0

    def __call__(self, k):
        return self.scale * np.exp(-(np.asarray(k, dtype=float) ** self.r))

    def last_index(self):
        # first k with scale * exp(-k^r) < EXP_FLOOR
        return int(np.ceil((np.log(self.scale / EXP_FLOOR)) ** (1.0 / self.r))) + 1


Sequence = Union[PowerLaw, ExpLaw, np.ndarray]


def _as_seq(s):
    if s is None or isinstance(s, (PowerLaw, ExpLaw)):
        return s
    arr = np.asarray(s, dtype=float).ravel()
    if arr.size == 0:
        raise InvalidSpec("explicit sequences must be nonempty")
    return arr


def _values(seq, k):
    if isinstance(seq, np.ndarray):
        return seq[k - 1]
    return seq(k)


def _length(seq):
    return seq.size if isinstance(seq, np.ndarray) else None


@dataclass(frozen=True)
class SpectralDecay:
    """Spectral description of a prior/model pair.

    ``lam``, ``gamma`` and ``eta`` are positive sequences. ``omega`` is either
    an explicit array of the coefficients omega_k or a law for omega_k**2
    (``PowerLaw(1 + c)`` encodes omega_k**2 = k**(-(1+c))). ``m`` is kept for
    bookkeeping; no rate formula uses it directly.
    """

    lam: Sequence
    gamma: Sequence
    eta: Optional[Sequence] = None
    omega: Optional[Sequence] = None
    m: Optional[np.ndarray] = None

    def __post_init__(self):
        for name in ("lam", "gamma", "eta", "omega"):
            object.__setattr__(self, name, _as_seq(getattr(self, name)))
        if self.m is not None:
            object.__setattr__(self, "m", np.asarray(self.m, dtype=float).ravel())
        for name in ("lam", "gamma", "eta"):
            s = getattr(self, name)
            if isinstance(s, np.ndarray) and not np.all(s > 0):
                raise InvalidSpec(f"{name} must be strictly positive")
            if isinstance(s, (PowerLaw, ExpLaw)) and not s.scale > 0:
                raise InvalidSpec(f"{name} must have a positive scale")
        if isinstance(self.lam, PowerLaw) and self.lam.exponent <= 1:
            raise InvalidSpec("sum of lambda_k diverges (need exponent > 1)")
        if isinstance(self.omega, PowerLaw) and self.omega.exponent <= 1:
            raise InvalidSpec("sum of omega_k^2 diverges (need exponent > 1)")

    @classmethod
    def power(cls, a, b, c=None, lam_scale=1.0, gamma_scale=1.0, omega_scale=1.0, eta=None):
        """lambda_k = k^-(1+a), gamma_k = k^-b and omega_k^2 = k^-(1+c) when c is given."""
        omega = None if c is None else PowerLaw(1.0 + c, omega_scale)
        return cls(PowerLaw(1.0 + a, lam_scale), PowerLaw(b, gamma_scale), eta, omega)

    @property
    def eta_seq(self):
        return self.gamma if self.eta is None else self.eta

    @property
    def omega_sq(self):
        if self.omega is None:
            return None
        if isinstance(self.omega, np.ndarray):
            return self.omega**2
        return self.omega

    def power_params(self):
        """Return (a, b, c) when lambda, gamma (and omega^2) are power laws."""
        if not (isinstance(self.lam, PowerLaw) and isinstance(self.gamma, PowerLaw)):
            raise UnsupportedSpec("rate exponents need power-law lambda_k and gamma_k")
        a = self.lam.exponent - 1.0
        b = self.gamma.exponent
        c = None
        if self.omega is not None:
            if isinstance(self.omega, PowerLaw):
                c = self.omega.exponent - 1.0
            elif np.any(self.omega != 0):
                raise UnsupportedSpec("omega must be zero or a power law for rate exponents")
        return a, b, c

    def trace(self):
        return gaussian_ratio_series(0.0, self)[0]


def _hurwitz_tail(s, K):
    """sum_{k > K} k^-s."""
    return float(special.zeta(s, K + 1))


def _power_ratio_sum(n, num, lam, gamma, power):
    """sum_k num_k / (n lam_k gamma_k + 1)^power for power-law inputs.

    Direct summation up to K well past the transition index, then the exact
    tail from the binomial expansion of (1 + u)^-power in u = n lam_k gamma_k < 1,
    each piece summed with the Hurwitz zeta function.
    """
    e = lam.exponent + gamma.exponent
    nn = n * lam.scale * gamma.scale
    kstar = nn ** (1.0 / e) if nn > 0 else 0.0
    K = int(max(1000, np.ceil(64 * kstar)))
    k = np.arange(1, K + 1, dtype=float)
    head = num(k) / (nn * k ** (-e) + 1.0) ** power
    total = float(np.sum(head))
    tail = 0.0
    uK = nn * K ** (-e)
    j = 0
    while True:
        coef = (-nn) ** j * (j + 1 if power == 2 else 1)
        piece = num.scale * coef * _hurwitz_tail(num.exponent + j * e, K)
        tail += piece
        j += 1
        if nn == 0 or abs(piece) <= 1e-17 * max(abs(total), 1e-300) or j > 200:
            break
        if uK >= 1:
            raise InvalidSpec("tail expansion does not converge")
    return total + tail


def _generic_ratio_sum(n, num, lam, gamma, power):
    lengths = [x for x in (_length(num), _length(lam), _length(gamma)) if x is not None]
    if lengths:
        K = min(lengths)
    else:
        idx = [s.last_index() for s in (num, lam, gamma) if isinstance(s, ExpLaw)]
        if not idx:
            raise UnsupportedSpec("cannot truncate this combination of sequences")
        K = min(idx)
    k = np.arange(1, K + 1)
    terms = _values(num, k) / (n * _values(lam, k) * _values(gamma, k) + 1.0) ** power
    return float(np.sum(terms))


def _ratio_sum(n, num, lam, gamma, power):
    if num is None:
        return 0.0
    if all(isinstance(s, PowerLaw) for s in (num, lam, gamma)):
        return _power_ratio_sum(n, num, lam, gamma, power)
    if isinstance(num, PowerLaw) and not any(isinstance(s, np.ndarray) for s in (lam, gamma)):
        if num.exponent <= 1:
            raise InvalidSpec("numerator series diverges")
        # Power-law numerator with an exponential law in the denominator:
        # the denominator tends to 1, so the tail is the numerator tail.
        K = 1000
        while True:
            k = np.arange(1, K + 1)
            head = float(np.sum(num(k) / (n * _values(lam, k) * _values(gamma, k) + 1.0) ** power))
            tail = num.scale * _hurwitz_tail(num.exponent, K)
            if n * float(np.max(_values(lam, k[-1:]) * _values(gamma, k[-1:]))) < 1e-17:
                return head + tail
            K *= 2
            if K > 10**7:
                raise InvalidSpec("series truncation did not converge")
    return _generic_ratio_sum(n, num, lam, gamma, power)


def gaussian_ratio_series(n, spec):
    """Return (sum lam/(n lam gamma + 1), sum omega^2/(n lam gamma + 1)^2)."""
    if not n >= 0:
        raise InvalidParameter("n must be nonnegative")
    s1 = _ratio_sum(float(n), spec.lam, spec.lam, spec.gamma, 1)
    if not np.isfinite(s1):
        raise InvalidSpec("sum of lambda_k does not converge")
    s2 = _ratio_sum(float(n), spec.omega_sq, spec.lam, spec.gamma, 2)
    return s1, s2


def maxterm_rate(n, spec):
    """max_k lam_k / (n lam_k eta_k + 1)."""
    if not n >= 0:
        raise InvalidParameter("n must be nonnegative")
    lam, eta = spec.lam, spec.eta_seq
    lengths = [x for x in (_length(lam), _length(eta)) if x is not None]
    if lengths:
        k = np.arange(1, min(lengths) + 1)
        return float(np.max(_values(lam, k) / (n * _values(lam, k) * _values(eta, k) + 1.0)))
    best, run, prev, start, chunk = -np.inf, 0, -np.inf, 1, 1024
    while True:
        k = np.arange(start, start + chunk)
        t = _values(lam, k) / (n * _values(lam, k) * _values(eta, k) + 1.0)
        for v in t:
            best = max(best, v)
            run = run + 1 if v < prev else 0
            prev = v
            if run >= SCAN_PATIENCE:
                return float(best)
        start += chunk
        if start > 10**7:
            return float(best)


@dataclass(frozen=True)
class RateExponents:
    first: float
    fourth: float
    overall: float


def predicted_exponents(spec=None, *, a=None, b=None, c=None):
    """Exponents of n for the shrinkage and Lipschitz terms of the bound.

    Pass either a :class:`SpectralDecay` built from power laws or the raw
    parameters ``a`` (lambda_k = k^-(1+a)), ``b`` (gamma_k = k^-b) and
    optionally ``c`` (omega_k^2 = k^-(1+c)).
    """
    if spec is not None:
        a, b, c = spec.power_params()
    if a is None or b is None:
        raise UnsupportedSpec("power-law parameters a and b are required")
    den = 2.0 * (a + b + 1.0)
    first = -min(a, c) / den if c is not None else -a / den
    fourth = -(a + 1.0 - b) / den
    return RateExponents(first, fourth, max(first, fourth))


def series1_asymptote(n, spec):
    """Leading-order shape of series1: n^-a/(1+a+b), or (log n)^(b+1)/n for lambda_k = e^-k."""
    if isinstance(spec.lam, ExpLaw) and isinstance(spec.gamma, PowerLaw):
        return np.log(n) ** (spec.gamma.exponent + 1.0) / n
    a, b, _ = spec.power_params()
    return np.asarray(n, dtype=float) ** (-a / (1.0 + a + b))


def truncated_trace(n, Q, I):
    """Tr[(n I + Q^-1)^-1] computed without inverting Q.

    With Q = L L^T, (n I + Q^-1)^-1 = L (n L^T I L + Id)^-1 L^T, so the trace
    is Tr[(n L^T I L + Id)^-1 L^T L], a symmetric positive-definite solve.
    """
    Q = np.asarray(Q, dtype=float)
    I = np.asarray(I, dtype=float)
    if Q.ndim != 2 or Q.shape[0] != Q.shape[1] or Q.shape != I.shape:
        raise InvalidInput("Q and I must be square matrices of the same size")
    if Q.shape[0] > 512:
        raise InvalidInput("matrices larger than 512 are not supported")
    try:
        L = linalg.cholesky(0.5 * (Q + Q.T), lower=True)
    except linalg.LinAlgError as exc:
        raise InvalidInput("Q is singular or not positive definite") from exc
    A = n * (L.T @ (0.5 * (I + I.T)) @ L) + np.eye(Q.shape[0])
    B = L.T @ L
    X = linalg.solve(A, B, assume_a="pos")
    return float(np.trace(X))


def finite_laplace_prediction(n, d, p):
    """(2/n)^(p/2) Gamma((d+p)/2) / Gamma(d/2): the n-scaling of the Laplace ratio."""
    if not n > 0:
        raise InvalidParameter("n must be positive")
    return float((2.0 / n) ** (p / 2.0) * np.exp(special.gammaln((d + p) / 2.0) - special.gammaln(d / 2.0)))


@dataclass(frozen=True)
class PcrBoundTerms:
    term1_shrinkage: float
    term2_tail_scaled: float
    term3_posterior_tail: float
    term4_lipschitz: float
    total: float

    def as_tuple(self):
        return (self.term1_shrinkage, self.term2_tail_scaled, self.term3_posterior_tail, self.term4_lipschitz)


def assemble_pcr_bound(shrinkage, L0n, mean_stat_dev, tail_prob, posterior_moment_ap, a, p, norm_theta0):
    """Combine the four pieces of the contraction bound."""
    if not a > 1:
        raise InvalidParameter("moment exponent a must exceed 1")
    if not p >= 1:
        raise InvalidParameter("p must be at least 1")
    vals = (shrinkage, L0n, mean_stat_dev, tail_prob, posterior_moment_ap, norm_theta0)
    if any((not np.isfinite(v)) or v < 0 for v in vals):
        raise InvalidParameter("bound components must be finite and nonnegative")
    ap = a * p
    t1 = float(shrinkage)
    t2 = float(norm_theta0 * tail_prob)
    t3 = float(posterior_moment_ap ** (1.0 / ap) * tail_prob ** (1.0 - 1.0 / ap))
    t4 = float(L0n * mean_stat_dev)
    return PcrBoundTerms(t1, t2, t3, t4, t1 + t2 + t3 + t4)
