#!/usr/bin/env python3
"""Scaling sweep over several gap rules, one CSV per rule.

Example::

    python3 scripts/run_sweep.py --A-list 0.5,1,2,4,8 --seed 7 --outdir sweeps

Solver results go through the shared cache, so an interrupted run picks up
where it stopped.
"""
import argparse
import sys
from pathlib import Path

from awgn_lab import cli

RULES = {
    "fixed-1e-2": ["--eps", "1e-2"],
    "fixed-1e-3": ["--eps", "1e-3"],
    "poly-beta1": ["--eps-rule", "poly", "--beta", "1"],
    "exp": ["--eps-rule", "exp"],
}


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--A-list", default="0.5,1,2,4,8")
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--outdir", default="sweeps")
    p.add_argument("--rules", default=",".join(RULES), help="comma-separated subset of " + ", ".join(RULES))
    args = p.parse_args(argv)
    out = Path(args.outdir)
    worst = 0
    for name in args.rules.split(","):
        target = out / f"sweep_{name}.csv"
        code = cli.main(["sweep", "--A-list", args.A_list, "--seed", str(args.seed),
                         *RULES[name], "--out", str(target)])
        print(f"{name}: exit {code} -> {target}", file=sys.stderr)
        worst = max(worst, code)
    return worst


if __name__ == "__main__":
    sys.exit(main())
