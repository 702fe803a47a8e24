#!/usr/bin/env python3
"""Convergence of the phase-uniform spectra along convergents.

For each consecutive pair of convergent denominators, prints the symmetric
difference measure and Hausdorff distance of the intersection spectra of the
almost Mathieu approximants, plus the per-level band data.
"""

import argparse
import sys

from qplab import contfrac, spectra


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--alpha", default="golden")
    ap.add_argument("--lam", type=float, default=0.5)
    ap.add_argument("--levels", type=int, default=5)
    ap.add_argument("--q-min", type=int, default=5)
    args = ap.parse_args()

    cf = contfrac.expand(args.alpha, args.levels + 8)
    conv = [(cf.q[i], cf.p[i]) for i in range(1, len(cf.q)) if cf.q[i] >= args.q_min]
    conv = conv[: args.levels + 1]
    sets = []
    for q, p in conv:
        s = spectra.amo_s_minus_closed_form(args.lam, q, p)
        sets.append((q, s))
        print(f"# q={q}: {s.count()} intervals, measure {s.measure():.6f}", file=sys.stderr)
    print("q_n,q_next,symdiff_measure,hausdorff")
    for (q1, s1), (q2, s2) in zip(sets, sets[1:]):
        d = spectra.set_distance(s1, s2)
        print(f"{q1},{q2},{d['symdiff_measure']!r},{d['hausdorff']!r}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
