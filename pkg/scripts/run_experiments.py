#!/usr/bin/env python3
"""Run every experiment config in configs/ through the CLI.

Usage: python3 scripts/run_experiments.py [--out-dir results] [--workers N] [--only NAME ...]
"""

import argparse
import sys
from pathlib import Path

from wpcr.cli import main as cli

ROOT = Path(__file__).resolve().parent.parent
COMMANDS = {
    "eigencheck": "eigencheck",
    "laplace_rates": "laplace-rates",
    "poincare": "poincare",
    "gc_rate": "gc-rate",
    "linreg": "decompose",
    "multinomial": "decompose",
    "finite_logistic": "decompose",
    "infinite_logistic": "decompose",
}


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out-dir", default=str(ROOT / "results"))
    parser.add_argument("--workers", type=int, default=1)
    parser.add_argument("--only", nargs="*", choices=sorted(COMMANDS))
    args = parser.parse_args()
    status = 0
    for name in args.only or COMMANDS:
        print(f"== {name}")
        code = cli(["--out-dir", args.out_dir, "--workers", str(args.workers), COMMANDS[name], str(ROOT / "configs" / f"{name}.json")])
        status = max(status, code)
    return status


if __name__ == "__main__":
    sys.exit(main())
