"""Command-line entry point: ``wpcr <subcommand> <config.json> [flags]``.

Config schemas (unknown keys are errors):

run-pcr, decompose
    Fields of :class:`wpcr.harness.ExperimentConfig`.
laplace-rates
    {"cases": [{"a", "b", "c"?}], "n_values": [...]}
poincare
    {"cases": [{"kind": "uniform", "lo"?, "hi"?} | {"kind": "gaussian", "sigma"?}
               | {"kind": "gibbs_gaussian", "lam", "gamma", "n"}], "nodes"?}
gc-rate
    {"distribution": "uniform" | "normal" | "exponential", "n_ladder", "replications"?, "p"?, "bootstrap"?}
eigencheck
    {"K"?, "nodes"?}
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np
from scipy import stats

from . import harness
from .errors import RunFailure, WpcrError
from .laplace import SpectralDecay, gaussian_ratio_series, maxterm_rate, predicted_exponents
from .measure import QuantileMeasure
from .models import UnitGrid, apply_istar, e_basis, h1_gram
from .poincare import GridDensity1D, poincare_grid_1d


def _check_keys(raw, allowed, where):
    unknown = set(raw) - set(allowed)
    if unknown:
        raise WpcrError(f"unknown keys in {where}: {sorted(unknown)}")


def _fmt(x):
    return harness._fmt(x)


def _write(out_dir, stem, fmt, rows, payload):
    out_dir.mkdir(parents=True, exist_ok=True)
    if fmt == "json":
        path = out_dir / f"{stem}.json"
        path.write_text(json.dumps(harness._jsonable(payload), indent=2, sort_keys=True) + "\n")
    else:
        path = out_dir / f"{stem}.csv"
        path.write_text("\n".join(rows) + "\n")
    return [path]


# ----------------------------------------------------------------- subcommands


def cmd_pcr(raw, args, decompose):
    if args.seed is not None:
        raw = {**raw, "seed": args.seed}
    cfg = harness.ExperimentConfig.from_dict(raw)
    result = harness.run_ladder(cfg, args.workers, decompose=decompose)
    stem = Path(cfg.output).stem if cfg.output else Path(args.config).stem
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if args.format == "json":
        path = out / f"{stem}.json"
        path.write_text(json.dumps(harness.result_to_dict(result), indent=2, sort_keys=True) + "\n")
        paths = [path]
    else:
        runs, summary = out / f"{stem}_runs.csv", out / f"{stem}_summary.csv"
        runs.write_text("\n".join(harness.run_rows(result)) + "\n")
        summary.write_text("\n".join(harness.summary_rows(result)) + "\n")
        paths = [runs, summary]
    fit = result.rate_fit
    if fit is not None:
        print(f"eps slope {fit.slope:.4f}  90% CI [{fit.bootstrap_ci90[0]:.4f}, {fit.bootstrap_ci90[1]:.4f}]")
    return paths


def cmd_laplace(raw, args):
    _check_keys(raw, {"cases", "n_values"}, "laplace-rates config")
    n_values = [float(n) for n in raw["n_values"]]
    rows = ["a,b,c,n,series1,series2,maxterm"]
    summary = []
    for case in raw["cases"]:
        _check_keys(case, {"a", "b", "c"}, "laplace-rates case")
        a, b, c = case["a"], case["b"], case.get("c")
        spec = SpectralDecay.power(a, b, c)
        s1s, mts = [], []
        for n in n_values:
            s1, s2 = gaussian_ratio_series(n, spec)
            mt = maxterm_rate(n, spec)
            s1s.append(s1)
            mts.append(mt)
            rows.append(",".join(_fmt(v) for v in (a, b, c, n, s1, s2, mt)))
        ex = predicted_exponents(a=a, b=b, c=c)
        x = np.log(n_values)
        summary.append(
            {
                "a": a,
                "b": b,
                "c": c,
                "series1_slope": float(np.polyfit(x, np.log(s1s), 1)[0]),
                "series1_predicted": -a / (1 + a + b),
                "maxterm_slope": float(np.polyfit(x, np.log(mts), 1)[0]),
                "maxterm_predicted": -(a + 1) / (1 + a + b),
                "exponents": ex.__dict__,
            }
        )
    for s in summary:
        print(f"a={s['a']} b={s['b']}: series1 slope {s['series1_slope']:.4f}, maxterm slope {s['maxterm_slope']:.4f}")
    return _write(Path(args.out_dir), "laplace_rates", args.format, rows, {"rows": rows[1:], "summary": summary})


def _poincare_case(case, nodes):
    kind = case.get("kind")
    if kind == "uniform":
        _check_keys(case, {"kind", "lo", "hi"}, "poincare case")
        lo, hi = case.get("lo", 0.0), case.get("hi", 1.0)
        density = GridDensity1D.from_function(lambda x: np.zeros_like(x), lo, hi, nodes)
        exact = (hi - lo) / np.pi
    elif kind == "gaussian":
        _check_keys(case, {"kind", "sigma"}, "poincare case")
        s = case.get("sigma", 1.0)
        density = GridDensity1D.from_function(lambda x: -0.5 * x * x / s**2, -10 * s, 10 * s, nodes)
        exact = s
    elif kind == "gibbs_gaussian":
        _check_keys(case, {"kind", "lam", "gamma", "n"}, "poincare case")
        lam, gam, n = case["lam"], case["gamma"], case["n"]
        var = lam / (n * lam * gam + 1.0)
        density = GridDensity1D.from_function(lambda x: -0.5 * x * x * (n * gam + 1.0 / lam), -10 * np.sqrt(var), 10 * np.sqrt(var), nodes)
        exact = np.sqrt(var)
    else:
        raise WpcrError(f"unknown poincare case kind {kind!r}")
    return kind, poincare_grid_1d(density), exact


def cmd_poincare(raw, args):
    _check_keys(raw, {"cases", "nodes"}, "poincare config")
    nodes = raw.get("nodes", 2048)
    rows = ["kind,c2,c2_exact,rel_error"]
    payload = []
    for case in raw["cases"]:
        kind, c2, exact = _poincare_case(case, nodes)
        rel = abs(c2 / exact - 1.0)
        rows.append(",".join([kind, _fmt(c2), _fmt(exact), _fmt(rel)]))
        payload.append({"case": case, "c2": c2, "c2_exact": exact, "rel_error": rel})
        print(f"{kind}: c2 = {c2:.6g} (closed form {exact:.6g})")
    return _write(Path(args.out_dir), "poincare", args.format, rows, payload)


DISTRIBUTIONS = {
    "uniform": lambda: QuantileMeasure.uniform(0.0, 1.0),
    "normal": lambda: QuantileMeasure.from_scipy(stats.norm()),
    "exponential": lambda: QuantileMeasure.from_scipy(stats.expon()),
}


def cmd_gc(raw, args):
    _check_keys(raw, {"distribution", "n_ladder", "replications", "p", "bootstrap", "seed"}, "gc-rate config")
    dist = raw.get("distribution", "uniform")
    if dist not in DISTRIBUTIONS:
        raise WpcrError(f"unknown distribution {dist!r}")
    seed = args.seed if args.seed is not None else raw.get("seed", 0)
    est = harness.gc_estimates(DISTRIBUTIONS[dist](), raw["n_ladder"], raw.get("replications", 100), raw.get("p", 2.0), seed)
    fit = harness.fit_rate([(e.n, e.mean) for e in est], raw.get("bootstrap", 1000), [e.values for e in est], seed)
    rows = [harness.SUMMARY_HEADER]
    for e in est:
        rows.append(",".join(_fmt(v) for v in (e.n, e.mean, e.se, fit.slope, *fit.bootstrap_ci90)))
    print(f"GC slope {fit.slope:.4f}  90% CI [{fit.bootstrap_ci90[0]:.4f}, {fit.bootstrap_ci90[1]:.4f}]")
    payload = {"estimates": [{"n": e.n, "mean": e.mean, "se": e.se} for e in est], "fit": fit.__dict__}
    return _write(Path(args.out_dir), "gc_rate", args.format, rows, payload)


def cmd_eigencheck(raw, args):
    _check_keys(raw, {"K", "nodes"}, "eigencheck config")
    K, nodes = raw.get("K", 16), raw.get("nodes", 4097)
    grid = UnitGrid(nodes)
    E = e_basis(grid.x, K)
    rows = ["k,sup_rel_error"]
    errs = []
    for k in range(1, K + 1):
        got = apply_istar(E[:, k - 1], grid=grid)
        want = E[:, k - 1] / (k * np.pi) ** 2
        err = float(np.max(np.abs(got - want)) / np.max(np.abs(want)))
        errs.append(err)
        rows.append(f"{k},{_fmt(err)}")
    ortho = float(np.max(np.abs(h1_gram(K) - np.eye(K))))
    print(f"max eigen error {max(errs):.3g}, orthonormality error {ortho:.3g}")
    return _write(Path(args.out_dir), "eigencheck", args.format, rows, {"errors": errs, "orthonormality": ortho})


# ----------------------------------------------------------------- entry point


def build_parser():
    parser = argparse.ArgumentParser(prog="wpcr", description="Posterior contraction rate experiments.")
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    parser.add_argument("--out-dir", default=".", help="directory for output files")
    parser.add_argument("--workers", type=int, default=1, help="processes for replications")
    parser.add_argument("--format", choices=("csv", "json"), default="csv")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("run-pcr", "laplace-rates", "poincare", "gc-rate", "eigencheck", "decompose"):
        sub.add_parser(name).add_argument("config", help="JSON config file")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        with open(args.config) as fh:
            raw = json.load(fh)
        if args.command == "run-pcr":
            paths = cmd_pcr(raw, args, decompose=False)
        elif args.command == "decompose":
            paths = cmd_pcr(raw, args, decompose=True)
        elif args.command == "laplace-rates":
            paths = cmd_laplace(raw, args)
        elif args.command == "poincare":
            paths = cmd_poincare(raw, args)
        elif args.command == "gc-rate":
            paths = cmd_gc(raw, args)
        else:
            paths = cmd_eigencheck(raw, args)
    except RunFailure as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return 1
    except (WpcrError, OSError, KeyError, TypeError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for p in paths:
        print(f"wrote {p}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
