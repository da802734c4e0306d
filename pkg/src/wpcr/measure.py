"""Probability measures on the line and Wasserstein distances.

One-dimensional distances use the quantile coupling, which is optimal for
every p >= 1. Distances in parameter space are only ever needed against a
point mass, where they reduce to a p-th moment.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import InvalidInput, InvalidParameter

PRUNE_TOL = 1e-15
DEFAULT_GRID = 4096


def _check_p(p, lower=1.0):
    if not np.isfinite(p) or p < lower:
        raise InvalidParameter(f"p must be >= {lower}, got {p}")


def _clean_weights(weights, size):
    """Drop tiny weights and renormalize; returns (keep mask, weights)."""
    if weights is None:
        return np.ones(size, dtype=bool), np.full(size, 1.0 / size)
    w = np.asarray(weights, dtype=float)
    if w.shape != (size,):
        raise InvalidInput("weights must match the number of samples")
    if not np.all(np.isfinite(w)) or np.any(w < 0):
        raise InvalidInput("weights must be finite and nonnegative")
    keep = w >= PRUNE_TOL
    if not keep.any():
        raise InvalidInput("all weights are below the pruning tolerance")
    w = w[keep]
    return keep, w / w.sum()


@dataclass(frozen=True)
class EmpiricalMeasure:
    """Weighted atoms on the real line, stored in ascending order."""

    samples: np.ndarray
    weights: np.ndarray
    uniform: bool = True

    def __init__(self, samples, weights=None):
        x = np.asarray(samples, dtype=float).ravel()
        if x.size == 0:
            raise InvalidInput("empirical measure needs at least one sample")
        if not np.all(np.isfinite(x)):
            raise InvalidInput("samples must be finite")
        keep, w = _clean_weights(weights, x.size)
        x = x[keep]
        order = np.argsort(x, kind="stable")
        object.__setattr__(self, "samples", x[order])
        object.__setattr__(self, "weights", w[order])
        object.__setattr__(self, "uniform", weights is None or bool(np.all(w == w[0])))

    def __len__(self):
        return self.samples.size

    @property
    def cumweights(self):
        c = np.cumsum(self.weights)
        c[-1] = 1.0
        return c

    def quantile(self, u):
        """Left-continuous generalized inverse of the CDF."""
        u = np.asarray(u, dtype=float)
        idx = np.searchsorted(self.cumweights, u, side="left")
        return self.samples[np.clip(idx, 0, self.samples.size - 1)]

    def moment(self, p):
        return float(np.sum(self.weights * np.abs(self.samples) ** p))


@dataclass(frozen=True)
class QuantileMeasure:
    """A law on the line given through its quantile function."""

    quantile: Callable[[np.ndarray], np.ndarray]
    moment_p: Optional[Callable[[float], float]] = None
    name: str = "custom"

    @classmethod
    def uniform(cls, lo=0.0, hi=1.0):
        if not hi > lo:
            raise InvalidParameter("uniform law needs hi > lo")

        def moment(p):
            # integral of |x|^p over [lo, hi] divided by the length
            def prim(x):
                return np.sign(x) * np.abs(x) ** (p + 1) / (p + 1)

            return float((prim(hi) - prim(lo)) / (hi - lo))

        return cls(lambda u: lo + (hi - lo) * np.asarray(u, dtype=float), moment, f"uniform({lo},{hi})")

    @classmethod
    def from_scipy(cls, dist, name=None):
        """Wrap a frozen ``scipy.stats`` distribution."""
        return cls(dist.ppf, None, name or getattr(dist.dist, "name", "scipy"))

    def moment(self, p, grid=DEFAULT_GRID):
        if self.moment_p is not None:
            return float(self.moment_p(p))
        u = (np.arange(grid) + 0.5) / grid
        return float(np.mean(np.abs(self.quantile(u)) ** p))


@dataclass(frozen=True)
class WeightedPointCloud:
    """Weighted points in coefficient space, e.g. posterior draws."""

    points: np.ndarray
    weights: np.ndarray = field(default=None)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2 or pts.shape[0] == 0:
            raise InvalidInput("point cloud must be a nonempty (m, d) array")
        keep, w = _clean_weights(self.weights, pts.shape[0])
        object.__setattr__(self, "points", pts[keep])
        object.__setattr__(self, "weights", w)

    @property
    def dim(self):
        return self.points.shape[1]


def _sorted_pairing(a, b, p):
    return float(np.mean(np.abs(a.samples - b.samples) ** p)) ** (1.0 / p)


def _merged_coupling(a, b, p):
    # Both quantile functions are piecewise constant; merge the breakpoints.
    cuts = np.union1d(a.cumweights, b.cumweights)
    cuts = cuts[cuts > 0]
    lengths = np.diff(np.concatenate(([0.0], cuts)))
    mids = cuts - 0.5 * lengths
    diff = np.abs(a.quantile(mids) - b.quantile(mids)) ** p
    return float(np.sum(lengths * diff)) ** (1.0 / p)


def _atom_quadrature(a, q, p, grid):
    # Midpoint rule inside each atom's quantile interval, so the step
    # function is integrated without straddling a jump.
    m = max(1, -(-grid // len(a)))
    starts = a.cumweights - a.weights
    frac = (np.arange(m) + 0.5) / m
    u = starts[:, None] + a.weights[:, None] * frac[None, :]
    vals = np.asarray(q.quantile(u.ravel()), dtype=float).reshape(u.shape)
    if not np.all(np.isfinite(vals)):
        raise InvalidInput("quantile function returned non-finite values on the interior grid")
    inner = np.mean(np.abs(a.samples[:, None] - vals) ** p, axis=1)
    return float(np.sum(a.weights * inner)) ** (1.0 / p)


def quantile_grid_distance(a, b, p, grid=DEFAULT_GRID):
    """Plain midpoint-rule quantile coupling on ``u_j = (j - 1/2)/grid``."""
    _check_p(p)
    u = (np.arange(grid) + 0.5) / grid
    qa = np.asarray(a.quantile(u), dtype=float)
    qb = np.asarray(b.quantile(u), dtype=float)
    if not (np.all(np.isfinite(qa)) and np.all(np.isfinite(qb))):
        raise InvalidInput("quantile function returned non-finite values on the interior grid")
    return float(np.mean(np.abs(qa - qb) ** p)) ** (1.0 / p)


def wasserstein_1d(a, b, p=2.0, grid=DEFAULT_GRID):
    """p-Wasserstein distance between a 1D empirical measure and another law.

    Parameters
    ----------
    a : EmpiricalMeasure
    b : EmpiricalMeasure or QuantileMeasure
    p : float
        Order, at least 1.
    grid : int
        Minimum number of interior quadrature points when ``b`` is analytic.

    Returns
    -------
    float
    """
    _check_p(p)
    if not isinstance(a, EmpiricalMeasure):
        a = EmpiricalMeasure(a)
    if isinstance(b, EmpiricalMeasure):
        if a.uniform and b.uniform and len(a) == len(b):
            return _sorted_pairing(a, b, p)
        return _merged_coupling(a, b, p)
    if isinstance(b, QuantileMeasure):
        return _atom_quadrature(a, b, p, grid)
    raise InvalidInput(f"unsupported measure type {type(b).__name__}")


def wasserstein_to_dirac(cloud, theta0, p=2.0):
    """W_p between a weighted point cloud and the point mass at ``theta0``."""
    _check_p(p)
    if not isinstance(cloud, WeightedPointCloud):
        cloud = WeightedPointCloud(cloud)
    t0 = np.atleast_1d(np.asarray(theta0, dtype=float))
    if t0.shape != (cloud.dim,):
        raise InvalidInput(f"theta0 has dimension {t0.size}, cloud has {cloud.dim}")
    dist = np.linalg.norm(cloud.points - t0, axis=1)
    return float(np.sum(cloud.weights * dist**p)) ** (1.0 / p)


def moment_p(m, p):
    """Absolute p-th moment of an empirical or quantile measure."""
    if not p > 0:
        raise InvalidParameter("p must be positive")
    if isinstance(m, EmpiricalMeasure):
        return m.moment(p)
    if isinstance(m, QuantileMeasure):
        return m.moment(p)
    return EmpiricalMeasure(m).moment(p)
