import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from wpcr.errors import InvalidInput, InvalidParameter, InvalidSpec, UnsupportedSpec
from wpcr.laplace import (
    ExpLaw,
    PowerLaw,
    SpectralDecay,
    assemble_pcr_bound,
    finite_laplace_prediction,
    gaussian_ratio_series,
    maxterm_rate,
    predicted_exponents,
    series1_asymptote,
    truncated_trace,
)

DECADES = np.logspace(3, 7, 9)


def slope(xs, ys):
    return np.polyfit(np.log(xs), np.log(ys), 1)[0]


def test_series_at_zero():
    spec = SpectralDecay.power(1.0, 2.0, 1.0)
    s1, s2 = gaussian_ratio_series(0, spec)
    assert s1 == pytest.approx(np.pi**2 / 6, rel=1e-12)
    assert s2 == pytest.approx(np.pi**2 / 6, rel=1e-12)
    arr = SpectralDecay([0.5, 0.25], [1.0, 1.0], omega=[0.3, -0.4])
    assert gaussian_ratio_series(0, arr) == pytest.approx((0.75, 0.25))


def test_single_mode():
    assert gaussian_ratio_series(1, SpectralDecay([1.0], [1.0], omega=[0.0])) == (0.5, 0.0)


def test_series1_slope_a1_b2():
    spec = SpectralDecay.power(1.0, 2.0)
    assert abs(slope(DECADES, [gaussian_ratio_series(n, spec)[0] for n in DECADES]) + 0.25) < 0.02


def test_divergent_trace_rejected():
    with pytest.raises(InvalidSpec):
        SpectralDecay(PowerLaw(1.0), PowerLaw(2.0))
    with pytest.raises(InvalidSpec):
        SpectralDecay([1.0, -1.0], [1.0, 1.0])
    with pytest.raises(InvalidParameter):
        gaussian_ratio_series(-1, SpectralDecay.power(1.0, 1.0))


def test_maxterm_examples():
    spec = SpectralDecay.power(1.0, 2.0)
    assert maxterm_rate(0, spec) == 1.0
    assert maxterm_rate(9, SpectralDecay([1.0, 0.1], [1.0, 1.0])) == pytest.approx(0.1)
    sq = SpectralDecay(PowerLaw(2.0), PowerLaw(2.0))
    assert abs(slope(DECADES, [maxterm_rate(n, sq) for n in DECADES]) + 0.5) < 0.02


def test_exponent_examples():
    e = predicted_exponents(a=15, b=2)
    assert (e.first, e.fourth, e.overall) == pytest.approx((-15 / 36, -14 / 36, -14 / 36), abs=1e-15)
    e = predicted_exponents(a=1, b=2)
    assert (e.first, e.fourth, e.overall) == pytest.approx((-1 / 8, 0.0, 0.0), abs=1e-15)
    assert predicted_exponents(a=2, b=1, c=1).first == pytest.approx(-1 / 8)
    assert predicted_exponents(SpectralDecay.power(2.0, 1.0, 1.0)).first == pytest.approx(-1 / 8)
    with pytest.raises(UnsupportedSpec):
        predicted_exponents(SpectralDecay(ExpLaw(1.0), PowerLaw(1.0)))


def test_exponential_eigenvalues_follow_log_law():
    spec = SpectralDecay(ExpLaw(1.0), PowerLaw(1.0))
    ns = np.logspace(4, 8, 9)
    ratio = [gaussian_ratio_series(n, spec)[0] / series1_asymptote(n, spec) for n in ns]
    # log S - log(1/n) against log log n has slope b + 1 = 2
    s = np.polyfit(np.log(np.log(ns)), np.log([gaussian_ratio_series(n, spec)[0] * n for n in ns]), 1)[0]
    assert abs(s - 2.0) < 0.25
    assert np.ptp(np.log(ratio)) < 1.0


def test_truncated_trace_examples(rng):
    lam = 1.0 / np.arange(1, 9) ** 2
    gam = 1.0 / np.arange(1, 9) ** 1.5
    n = 37.0
    assert truncated_trace(n, np.diag(lam), np.diag(gam)) == pytest.approx(np.sum(lam / (n * lam * gam + 1)), rel=1e-12)
    assert truncated_trace(0.0, np.diag(lam), np.diag(gam)) == pytest.approx(lam.sum(), rel=1e-12)
    U = stats.ortho_group.rvs(8, random_state=1)
    got = truncated_trace(n, U @ np.diag(lam) @ U.T, U @ np.diag(gam) @ U.T)
    assert got == pytest.approx(np.sum(lam / (n * lam * gam + 1)), abs=1e-10)
    with pytest.raises(InvalidInput):
        truncated_trace(1.0, np.zeros((3, 3)), np.eye(3))
    with pytest.raises(InvalidInput):
        truncated_trace(1.0, np.eye(513), np.eye(513))


def test_finite_prediction_slopes():
    ns = np.logspace(1, 5, 5)
    assert slope(ns, [finite_laplace_prediction(n, 3, 2) for n in ns]) == pytest.approx(-1.0, abs=1e-12)
    assert slope(ns, [finite_laplace_prediction(n, 1, 2) for n in ns]) == pytest.approx(-1.0, abs=1e-12)
    assert slope(ns, [finite_laplace_prediction(n, 2, 1) for n in ns]) == pytest.approx(-0.5, abs=1e-12)
    # d = 1, p = 2: (2/n) Gamma(3/2)/Gamma(1/2) = 1/n
    assert finite_laplace_prediction(10, 1, 2) == pytest.approx(0.1)


def test_assemble_examples():
    t = assemble_pcr_bound(0.3, 5.0, 0.0, 0.0, 2.0, 2.0, 2.0, 1.0)
    assert t.total == pytest.approx(0.3)
    t = assemble_pcr_bound(1, 1, 1, 1, 1, 2, 2, 1)
    assert t.as_tuple() == (1, 1, 1, 1) and t.total == 4
    with pytest.raises(InvalidParameter):
        assemble_pcr_bound(1, 1, 1, 1, 1, 1.0, 2, 1)
    with pytest.raises(InvalidParameter):
        assemble_pcr_bound(-1, 1, 1, 1, 1, 2, 2, 1)


power_specs = st.builds(
    lambda a, b, c: SpectralDecay.power(a, b, c),
    st.floats(0.2, 4.0), st.floats(0.0, 3.0), st.floats(0.2, 4.0),
)


@given(power_specs, st.floats(0.0, 1e5), st.floats(1.01, 10.0))
def test_series_monotone_in_n(spec, n, factor):
    s1, s2 = gaussian_ratio_series(n, spec)
    t1, t2 = gaussian_ratio_series(n * factor + 1e-3, spec)
    assert t1 < s1 and t2 < s2
    assert s1 <= spec.trace() * (1 + 1e-12)


@given(power_specs, st.floats(0.0, 1e6))
def test_maxterm_below_series1(spec, n):
    assert maxterm_rate(n, spec) <= gaussian_ratio_series(n, spec)[0] * (1 + 1e-12)


@given(st.integers(1, 40), st.floats(0.0, 1e4), st.integers(0, 2**31))
def test_truncated_trace_matches_partial_sums(N, n, seed):
    r = np.random.default_rng(seed)
    lam = np.sort(r.random(N) + 0.01)[::-1]
    gam = r.random(N) + 0.01
    U = np.linalg.qr(r.standard_normal((N, N)))[0]
    arr = SpectralDecay(lam, gam)
    got = truncated_trace(n, U @ np.diag(lam) @ U.T, U @ np.diag(gam) @ U.T)
    assert got == pytest.approx(gaussian_ratio_series(n, arr)[0], rel=1e-10, abs=1e-12)


@pytest.mark.parametrize("a, b", [(1, 2), (2, 2), (3, 1), (2, 0.5), (1.5, 1)])
def test_exponent_realization(a, b):
    spec = SpectralDecay.power(a, b)
    s1 = [gaussian_ratio_series(n, spec)[0] for n in DECADES]
    assert abs(slope(DECADES, s1) - 2 * predicted_exponents(a=a, b=b).first) < 0.03
