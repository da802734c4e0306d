import json

import numpy as np
import pytest

from wpcr.errors import InvalidInput, InvalidParameter
from wpcr.harness import (
    ExperimentConfig,
    conjugate_eps_expectation,
    estimate_epsilon_n,
    fit_rate,
    gc_estimates,
    gc_rate,
    replicate,
    result_to_dict,
    run_ladder,
    run_rows,
    single_atom_expectation,
    summary_rows,
    tail_probability,
    RUN_HEADER,
    SUMMARY_HEADER,
)
from wpcr.measure import QuantileMeasure


def linreg_cfg(**kw):
    theta0 = [(-1.0) ** k / (k + 1) ** 2 for k in range(8)]
    base = dict(
        model="linreg",
        model_params={"K": 8, "sigma": 0.5},
        prior={"kind": "kl_power", "a": 1.0},
        theta0=theta0,
        n_ladder=[100],
        replications=200,
        sampler={"method": "exact"},
        delta=0.5,
        q=0.0,
    )
    base.update(kw)
    return ExperimentConfig.from_dict(base)


# ----------------------------------------------------------------- config


def test_config_validation():
    with pytest.raises(InvalidInput):
        ExperimentConfig.from_dict({"model": "linreg", "theta0": [0.0], "n_ladder": [10], "colour": 1})
    with pytest.raises(InvalidInput):
        ExperimentConfig.from_dict({"model": "linreg", "theta0": [0.0], "n_ladder": [10], "sampler": {"speed": 2}})
    with pytest.raises(InvalidParameter):
        ExperimentConfig("gaussian", [0.0], [100, 10])
    with pytest.raises(InvalidParameter):
        ExperimentConfig("gaussian", [0.0], [10], replications=5)
    with pytest.raises(InvalidParameter):
        ExperimentConfig("gaussian", [0.0], [10], q=0.5)
    with pytest.raises(InvalidParameter):
        ExperimentConfig("gaussian", [0.0], [10], tail_replications=100)
    with pytest.raises(InvalidInput):
        ExperimentConfig("gaussian", [0.0, 1.0], [10]).build()
    with pytest.raises(InvalidInput):
        ExperimentConfig("gaussian", [0.0], [10], bound_constants={"zeta": 2.0})
    assert ExperimentConfig("gaussian", [0.0], [10], bound_constants={"C_R": 3.0}).infinite_consts().C_R == 3.0
    cfg = linreg_cfg()
    again = ExperimentConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
    assert again == cfg
    assert ExperimentConfig("gaussian", [0.0], [10], q=0.25).delta_n(16, 2.0) == pytest.approx(1.0)


# ----------------------------------------------------------------- eps estimates


def test_degenerate_prior_gives_zero():
    cfg = ExperimentConfig("gaussian", [0.7], [10, 100], prior={"kind": "point", "theta": [0.7]}, replications=20)
    for n in (10, 100):
        assert estimate_epsilon_n(cfg, n) == (0.0, 0.0)


def test_linreg_matches_conjugate_oracle():
    cfg = linreg_cfg()
    model, prior, theta0 = cfg.build()
    mean, se = estimate_epsilon_n(cfg, 100)
    oracle, oracle_se = conjugate_eps_expectation(model, prior, theta0, 100, designs=100)
    assert abs(mean - oracle) < 3 * np.hypot(se, oracle_se)


def test_oracle_given_design_matches_monte_carlo():
    from wpcr.harness import conjugate_eps_given_design
    from wpcr.models import linreg_suff_posterior

    cfg = linreg_cfg()
    model, prior, theta0 = cfg.build()
    rng = np.random.default_rng(3)
    u = rng.random(30)
    vals = []
    for _ in range(20000):
        v = model.psi(u) @ theta0 + model.sigma * rng.standard_normal(30)
        post = linreg_suff_posterior(np.column_stack([u, v]), prior, model)
        vals.append(np.sqrt(np.trace(post.cov) + np.sum((post.mean - theta0) ** 2)))
    vals = np.array(vals)
    exact = conjugate_eps_given_design(model, prior, theta0, u)
    assert abs(vals.mean() - exact) < 4 * vals.std() / np.sqrt(vals.size)


def test_replication_is_reproducible_and_paths_agree():
    base = dict(
        model="finite_logistic",
        model_params={"N": 2},
        theta0=[1.0, -0.5],
        n_ladder=[50],
        replications=20,
        delta=0.5,
    )
    stat = ExperimentConfig.from_dict(base)
    data = ExperimentConfig.from_dict({**base, "path": "data"})
    built = stat.build()
    for r in range(20):
        a, a2 = replicate(stat, 0, r, built), replicate(stat, 0, r, built)
        assert (a.eps, a.seed) == (a2.eps, a2.seed)
        assert np.array_equal(a.stat, a2.stat)
        b = replicate(data, 0, r, built)
        assert a.seed == b.seed
        assert a.eps == pytest.approx(b.eps, rel=1e-8)


# ----------------------------------------------------------------- tails


def test_tail_probability_limits():
    cfg = ExperimentConfig("finite_logistic", [0.3], [10], model_params={"N": 1}, replications=20)
    assert tail_probability(cfg, 10, 0.0) == 1.0
    assert tail_probability(cfg, 10, np.inf) == 0.0
    with pytest.raises(InvalidParameter):
        tail_probability(cfg, 10, 0.1, replications=50)


@pytest.mark.parametrize("n", [10, 30, 100, 300])
def test_tail_probability_below_hoeffding(n):
    cfg = ExperimentConfig("finite_logistic", [0.3], [n], model_params={"N": 1}, replications=20, tail_replications=400)
    assert tail_probability(cfg, n, 0.1) <= 2 * np.exp(-2 * n * 0.01 / 4)


# ----------------------------------------------------------------- Glivenko-Cantelli


def test_single_atom_oracle():
    mu = QuantileMeasure.uniform()
    est = gc_estimates(mu, [1], replications=4000, seed=2)[0]
    assert abs(est.mean - single_atom_expectation(mu)) < 3 * est.se
    # for U[0,1] the inner integral is x^2 - x + 1/3
    x, w = np.polynomial.legendre.leggauss(200)
    x, w = 0.5 * (x + 1), 0.5 * w
    assert single_atom_expectation(mu) == pytest.approx(np.sum(w * np.sqrt(x * x - x + 1 / 3)), rel=1e-10)


def test_gc_slope_and_envelope():
    mu = QuantileMeasure.uniform()
    ladder = [100, 316, 1000, 3162, 10000]
    fit = gc_rate(mu, ladder, replications=100, bootstrap=200)
    assert abs(fit.slope + 0.5) < 0.05
    # envelope for m = 1, q = 8: (E|X|^8)^(1/8) (n^-1/4 + n^-(q-2)/(2q))
    est = gc_estimates(mu, ladder, replications=100)
    env = np.array([(1 / 9) ** 0.125 * (n**-0.25 + n ** (-6 / 16)) for n in ladder])
    means = np.array([e.mean for e in est])
    C = means[0] / env[0]
    assert np.all(means <= C * env * (1 + 1e-12))


# ----------------------------------------------------------------- rate fits


def test_fit_rate_examples():
    ns = np.logspace(1, 6, 6)
    fit = fit_rate([(n, 3 * n**-0.5) for n in ns])
    assert fit.slope == pytest.approx(-0.5, abs=1e-12)
    assert fit.intercept == pytest.approx(np.log(3), abs=1e-12)
    assert fit.r_squared == pytest.approx(1.0)
    assert fit.bootstrap_ci90[0] <= fit.slope <= fit.bootstrap_ci90[1]
    flat = fit_rate([(n, 0.7) for n in ns])
    assert flat.slope == pytest.approx(0.0, abs=1e-12)
    rng = np.random.default_rng(1)
    noisy = fit_rate([(n, n**-0.5 * (1 + 0.1 * rng.standard_normal())) for n in np.logspace(1, 6, 11)])
    assert abs(noisy.slope + 0.5) < 0.03
    with pytest.raises(InvalidInput):
        fit_rate([(10, 1.0), (100, 0.5), (1000, 0.0), (1e4, 0.1)])
    with pytest.raises(InvalidInput):
        fit_rate([(10, 1.0), (100, 0.5), (1000, 0.2)])


# ----------------------------------------------------------------- full ladder


def test_run_ladder_outputs():
    cfg = linreg_cfg(n_ladder=[50, 100, 200, 400], replications=20, bootstrap=50)
    result = run_ladder(cfg)
    rows = run_rows(result)
    assert rows[0] == RUN_HEADER
    assert len(rows) == 1 + 4 * 20
    assert summary_rows(result)[0] == SUMMARY_HEADER
    for pt in result.ladder:
        assert pt.terms.total >= pt.terms.term1_shrinkage > 0
        assert pt.eps_hat > 0
    assert -0.7 < result.rate_fit.slope < -0.3
    again = run_ladder(cfg)
    assert run_rows(again) == rows
    json.dumps(result_to_dict(result))


def test_ladder_parallel_matches_serial():
    cfg = linreg_cfg(n_ladder=[50, 100, 200, 400], replications=20, bootstrap=50)
    assert run_rows(run_ladder(cfg, workers=2, decompose=False)) == run_rows(run_ladder(cfg, decompose=False))
