import json
from pathlib import Path

import pytest

from wpcr.cli import main
from wpcr.harness import RUN_HEADER, SUMMARY_HEADER

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def write(tmp_path, name, payload):
    path = tmp_path / name
    path.write_text(json.dumps(payload))
    return str(path)


def small_pcr(tmp_path, **kw):
    cfg = {
        "model": "linreg",
        "model_params": {"K": 4, "sigma": 0.5},
        "prior": {"kind": "kl_power", "a": 1.0},
        "theta0": [0.5, -0.25, 0.1, 0.05],
        "n_ladder": [50, 100, 200, 400],
        "replications": 20,
        "sampler": {"method": "exact"},
        "delta": 0.5,
        "q": 0.0,
        "bootstrap": 50,
    }
    cfg.update(kw)
    return write(tmp_path, "small.json", cfg)


def test_run_pcr_csv(tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["--out-dir", str(out), "run-pcr", small_pcr(tmp_path)]) == 0
    runs = (out / "small_runs.csv").read_text().splitlines()
    summary = (out / "small_summary.csv").read_text().splitlines()
    assert runs[0] == RUN_HEADER
    assert len(runs) == 81
    assert summary[0] == SUMMARY_HEADER
    assert len(summary) == 5
    assert "eps slope" in capsys.readouterr().out


def test_outputs_are_byte_reproducible(tmp_path):
    cfg = small_pcr(tmp_path)
    for d in ("a", "b"):
        assert main(["--out-dir", str(tmp_path / d), "decompose", cfg]) == 0
    for name in ("small_runs.csv", "small_summary.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    assert main(["--seed", "9", "--out-dir", str(tmp_path / "c"), "decompose", cfg]) == 0
    assert (tmp_path / "a" / "small_runs.csv").read_bytes() != (tmp_path / "c" / "small_runs.csv").read_bytes()


def test_json_format(tmp_path):
    assert main(["--format", "json", "--out-dir", str(tmp_path), "decompose", small_pcr(tmp_path)]) == 0
    payload = json.loads((tmp_path / "small.json").read_text())
    assert len(payload["ladder"]) == 4
    assert payload["rate_fit"]["slope"] < 0


@pytest.mark.parametrize(
    "command,config,output",
    [
        ("eigencheck", "eigencheck.json", "eigencheck.csv"),
        ("laplace-rates", "laplace_rates.json", "laplace_rates.csv"),
        ("poincare", "poincare.json", "poincare.csv"),
    ],
)
def test_analytic_subcommands(tmp_path, command, config, output):
    assert main(["--out-dir", str(tmp_path), command, str(CONFIGS / config)]) == 0
    assert (tmp_path / output).exists()


def test_gc_rate_subcommand(tmp_path):
    cfg = write(tmp_path, "gc.json", {"distribution": "normal", "n_ladder": [10, 30, 100, 300], "replications": 30, "bootstrap": 20})
    assert main(["--out-dir", str(tmp_path), "gc-rate", cfg]) == 0
    lines = (tmp_path / "gc_rate.csv").read_text().splitlines()
    assert lines[0] == SUMMARY_HEADER and len(lines) == 5


def test_exit_codes(tmp_path, capsys):
    assert main(["run-pcr", str(tmp_path / "missing.json")]) == 2
    assert main(["run-pcr", small_pcr(tmp_path, colour="red")]) == 2
    assert main(["eigencheck", write(tmp_path, "e.json", {"K": 4, "bogus": 1})]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["poincare", str(bad)]) == 2
    with pytest.raises(SystemExit):
        main(["frobnicate", str(bad)])
    capsys.readouterr()


def test_run_failure_exit_code(tmp_path, monkeypatch):
    from wpcr import harness
    from wpcr.errors import RunFailure

    def fail(*args, **kwargs):
        raise RunFailure("too many flagged replications")

    monkeypatch.setattr(harness, "run_ladder", fail)
    assert main(["--out-dir", str(tmp_path), "run-pcr", small_pcr(tmp_path)]) == 1
