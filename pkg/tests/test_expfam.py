import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy import integrate, stats

from wpcr.errors import InvalidInput, NumericFailure
from wpcr.expfam import (
    ExpFamilySpec,
    Interval,
    PosteriorKernelSpec,
    kl_divergence,
    kl_representation_residual,
    log_posterior_unnorm,
    s_zero,
    stat_loglik,
    suff_stat_mean,
)
from wpcr.models import (
    DirichletPrior,
    FiniteLogisticModel,
    GaussianLocationModel,
    InfiniteLogisticModel,
    KLPrior,
    LinRegModel,
    MultinomialModel,
    e_basis_deriv,
)

FLOG1 = FiniteLogisticModel(1)
FLOG2 = FiniteLogisticModel(2)
MULTI3 = MultinomialModel(3)


def constant_family(v):
    v = np.asarray(v, dtype=float)
    return ExpFamilySpec(
        beta=lambda x: np.tile(v, (np.atleast_1d(x).size, 1)),
        g=lambda th: np.atleast_2d(th),
        log_partition=lambda th: np.atleast_2d(th) @ v,
        base_density=lambda x: np.ones(np.atleast_1d(x).size),
        sample_space=Interval(0.0, 1.0),
        dim_stat=v.size,
    )


def test_suff_stat_examples():
    v = np.array([0.25, -2.0])
    assert np.array_equal(suff_stat_mean([0.3], constant_family(v)).value, v)
    assert suff_stat_mean([0.5], FLOG1.family).value == pytest.approx([1.0], abs=1e-15)
    inf = InfiniteLogisticModel(8)
    coeffs = suff_stat_mean([1.0], inf.family).value
    oracle = [integrate.quad(lambda z: e_basis_deriv(z, 8)[0, k], 0, 1)[0] for k in range(8)]
    assert coeffs == pytest.approx(oracle, abs=1e-12)
    with pytest.raises(InvalidInput):
        suff_stat_mean([], FLOG1.family)


def test_s_zero_examples():
    v = np.array([1.5, 0.5])
    assert s_zero(constant_family(v), np.zeros(2)) == pytest.approx(v, abs=1e-8)
    assert FLOG1.s_zero([0.0]) == pytest.approx([2 / np.pi], abs=1e-12)
    # the adaptive-quadrature path, without the closed-form mean
    fam = FLOG1.family
    bare = ExpFamilySpec(fam.beta, fam.g, fam.log_partition, fam.base_density, fam.sample_space, fam.dim_stat)
    assert s_zero(bare, [0.0]) == pytest.approx([2 / np.pi], abs=1e-8)
    assert MULTI3.s_zero([0.2, 0.5]) == pytest.approx([0.2, 0.5])


def test_log_posterior_examples():
    prior = KLPrior([0.0], [2.0])
    k0 = PosteriorKernelSpec(FLOG1.family, prior, 0, [0.7])
    assert log_posterior_unnorm([0.4], k0) == pytest.approx(prior.logpdf([0.4])[0])
    k = PosteriorKernelSpec(FLOG1.family, prior, 25, [0.3])
    assert log_posterior_unnorm([0.0], k) == pytest.approx(prior.logpdf([0.0])[0], abs=1e-13)


def test_conjugate_gaussian_kernel():
    model = GaussianLocationModel(0.8)
    prior = KLPrior([0.2], [1.5])
    n, b = 12, 0.9
    kernel = PosteriorKernelSpec(model.family, prior, n, [b])
    grid = np.linspace(-3, 4, 20001)
    lp = log_posterior_unnorm(grid[:, None], kernel)
    dens = np.exp(lp - lp.max())
    dens /= integrate.simpson(dens, x=grid)
    mean, cov = model.exact_posterior(prior, b, n)
    exact = stats.norm.pdf(grid, mean[0], np.sqrt(cov[0, 0]))
    assert np.max(np.abs(dens - exact)) < 1e-10


def test_admissible_box_and_overflow():
    vals = stat_loglik(FLOG1.family, np.array([[60.0], [1.0]]), np.array([0.5]), 10)
    assert vals[0] == -np.inf and np.isfinite(vals[1])
    fam = ExpFamilySpec(
        beta=lambda x: np.ones((np.atleast_1d(x).size, 1)),
        g=lambda th: np.atleast_2d(th) * 1e308,
        log_partition=lambda th: np.zeros(np.atleast_2d(th).shape[0]),
        base_density=lambda x: np.ones(np.atleast_1d(x).size),
        sample_space=Interval(0.0, 1.0),
        dim_stat=1,
    )
    with pytest.raises(NumericFailure):
        stat_loglik(fam, [[10.0]], np.array([1e10]), 1000)


def test_kl_examples():
    assert kl_divergence([0.3, 0.2], [0.3, 0.2], MULTI3) == 0.0
    two = MultinomialModel(2)
    assert kl_divergence([0.25], [0.5], two) == pytest.approx(0.5 * np.log(2) + 0.5 * np.log(2 / 3), abs=1e-12)
    assert kl_divergence([0.25], [0.5], two) == pytest.approx(0.14384, abs=1e-5)
    ones = LinRegModel(K=1, sigma=1.0, basis=lambda u: np.ones((np.atleast_1d(u).size, 1)))
    c = 0.7
    assert kl_divergence([1.0 + c], [1.0], ones) == pytest.approx(c * c / 2, abs=1e-12)
    assert kl_divergence([1.0 + c], [1.0], ones, method="quadrature") == pytest.approx(c * c / 2, abs=1e-9)


def test_residual_examples(rng):
    tb = np.zeros(2)
    kernel = PosteriorKernelSpec(FLOG2.family, KLPrior(np.zeros(2), np.ones(2)), 40, FLOG2.s_zero(tb))
    assert kl_representation_residual(tb, kernel, tb, FLOG2) == 0.0
    for theta in rng.uniform(-2, 2, size=(10, 2)):
        assert abs(kl_representation_residual(theta, kernel, tb, FLOG2)) < 1e-9
    tb3 = np.array([0.3, 0.45])
    kernel3 = PosteriorKernelSpec(MULTI3.family, DirichletPrior(3), 200, MULTI3.s_zero(tb3))
    pts = rng.dirichlet(np.ones(3), size=100)[:, :2]
    worst = max(abs(kl_representation_residual(t, kernel3, tb3, MULTI3)) for t in pts)
    assert worst < 1e-9


@pytest.mark.parametrize(
    "model, t0, thetas",
    [
        (MULTI3, [0.3, 0.3], [[x, y] for x in (0.1, 0.3, 0.5) for y in (0.2, 0.3, 0.4)]),
        (FLOG2, [0.5, -1.0], [[x, y] for x in (-1.0, 0.5, 2.0) for y in (-1.0, 0.0)]),
        (GaussianLocationModel(), [0.0], [[x] for x in np.linspace(-2, 2, 9)]),
        (LinRegModel(K=3), [0.1, 0.2, 0.3], [[x, 0.2, y] for x in (0.1, 0.5) for y in (0.3, -1.0)]),
    ],
)
def test_kl_nonnegative_and_identifiable(model, t0, thetas):
    for th in thetas:
        k = kl_divergence(th, t0, model)
        assert k >= 0
        if np.allclose(th, t0):
            assert k < 1e-9
        else:
            assert k > 1e-9


@given(arrays(float, st.integers(1, 20), elements=st.floats(0, 1)), arrays(float, st.integers(1, 20), elements=st.floats(0, 1)))
def test_suff_stat_linearity(x, y):
    sx, sy = suff_stat_mean(x, FLOG2.family), suff_stat_mean(y, FLOG2.family)
    both = suff_stat_mean(np.concatenate([x, y]), FLOG2.family)
    weighted = (sx.n * sx.value + sy.n * sy.value) / (sx.n + sy.n)
    assert both.n == x.size + y.size
    assert both.value == pytest.approx(weighted, abs=1e-13)


@pytest.mark.parametrize("model, prior, b, n, box", [
    (FLOG1, KLPrior([0.0], [1.0]), [0.6], 50, ([-6.0], [8.0])),
    (FLOG2, KLPrior(np.zeros(2), np.ones(2)), [0.6, 0.1], 30, ([-5.0, -5.0], [7.0, 5.0])),
])
def test_normalized_kernel_integrates_to_one(model, prior, b, n, box):
    kernel = PosteriorKernelSpec(model.family, prior, n, b)
    shift = max(log_posterior_unnorm(t, kernel) for t in np.stack(np.meshgrid(*[np.linspace(lo, hi, 41) for lo, hi in zip(*box)]), -1).reshape(-1, len(box[0])))
    Z = integrate.nquad(lambda *t: np.exp(log_posterior_unnorm(np.array(t), kernel) - shift), list(zip(*box)), opts={"epsabs": 1e-12, "epsrel": 1e-10})[0]
    axes = [np.linspace(lo, hi, 401) for lo, hi in zip(*box)]
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(axes))
    total = np.exp(log_posterior_unnorm(mesh, kernel) - shift - np.log(Z)).reshape([401] * len(axes))
    for ax in reversed(axes):
        total = integrate.simpson(total, x=ax, axis=-1)
    assert abs(total - 1.0) < 1e-6
