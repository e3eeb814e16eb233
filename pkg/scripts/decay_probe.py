#!/usr/bin/env python3
"""Chi-square decay of the best m-atom approximation to a uniform grid.

Prints ``m, chi2`` rows and the least-squares fit of ``log chi2`` against
``m^2`` for several target widths.

Example::

    python3 scripts/decay_probe.py --widths 0.5,1,2 --m-max 10
"""
import argparse

from awgn_lab.capacity import OptimizerBudget, best_m_point_chi2
from awgn_lab.cli import decay_fit
from awgn_lab.mixture import DiscreteInput


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--widths", default="1")
    p.add_argument("--grid-points", type=int, default=201)
    p.add_argument("--m-max", type=int, default=12)
    p.add_argument("--seed", type=int, default=7)
    args = p.parse_args(argv)
    budget = OptimizerBudget(seed=args.seed)
    for A in (float(t) for t in args.widths.split(",")):
        target = DiscreteInput.uniform_grid(A, args.grid_points)
        ms, vals, prev = [], [], ()
        for m in range(2, args.m_max + 1):
            v, d = best_m_point_chi2(target, m, budget, warm_start=prev)
            prev = (d,)
            ms.append(m)
            vals.append(v)
            print(f"A={A:g} m={m:2d} chi2={v!r}")
        fit = decay_fit(ms, vals)
        print(f"A={A:g} fit over m>=4: slope={fit['slope']:.5g} r2={fit['r2']:.4f}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
