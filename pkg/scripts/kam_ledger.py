#!/usr/bin/env python3
"""Run the conjugation scheme on a near-rotation cocycle and print the ledger.

One JSON record per level: measured perturbation (log), grid residual of the
accumulated conjugation, distance of the step conjugation from the identity,
and the measured small-divisor floor.
"""

import argparse
import json
import sys

import numpy as np

from qplab import contfrac, kam
from qplab.udspace import FourierSeries, MatSeries, Modulus, rotation_series


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--alpha", default="golden")
    ap.add_argument("--rho", type=float, default=0.25)
    ap.add_argument("--eps", type=float, default=1e-3)
    ap.add_argument("--steps", type=int, default=3)
    ap.add_argument("--A", type=float, default=25.0)
    ap.add_argument("--mode", default="measured", choices=("measured", "strict"))
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    cf = contfrac.expand(args.alpha, 25000)
    sel = contfrac.select_bridges(cf, args.A)
    print(f"# bridges at indices {sel.idx}", file=sys.stderr)

    rng = np.random.default_rng(args.seed)
    K0 = 10

    def small(amp):
        c = rng.normal(size=2 * K0 + 1) * np.exp(-0.5 * np.abs(np.arange(-K0, K0 + 1))) + 0j
        return FourierSeries(amp * (c + np.conj(c[::-1])) / 2.0, True)

    x, y, z = small(args.eps), small(args.eps), small(args.eps)
    F = MatSeries.from_entries(x, y + z, y - z, x * (-1.0))
    A0 = rotation_series(FourierSeries.constant(args.rho), out_K=2).mat_mul(
        F.exp_map(out_K=3 * K0), out_K=3 * K0 + 4, tail_tol=None
    )
    out = kam.almost_reducibility_driver(
        cf.alpha, A0, args.rho, Modulus("analytic"), sel, steps=args.steps, mode=args.mode
    )
    for entry in out["ledger"]:
        print(json.dumps(entry))
    print(f"# {out['stop_reason']}", file=sys.stderr)
    return 0 if out["ledger"] else 2


if __name__ == "__main__":
    sys.exit(main())
