#!/usr/bin/env python3
"""Study of the NL-means selection thresholds under unit white noise.

Prints, for a range of rejected-offset budgets, the min / mean / max
per-offset threshold over the search window and the relative spread
between the most and least overlapping offsets.  The spread is what the
constant-threshold simplification gives up.
"""

import argparse

from redlab.denoise import nlmeans_a_priori_threshold


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--p", type=int, default=8, help="patch side")
    ap.add_argument("--c", type=int, default=10, help="search radius")
    ap.add_argument(
        "--nfa",
        type=float,
        nargs="+",
        default=[0.05, 0.5, 4.41, 44.1],
        help="rejected-offset budgets to tabulate",
    )
    args = ap.parse_args()

    n_t = (2 * args.c + 1) ** 2
    print(f"patch {args.p}x{args.p}, window {2*args.c+1}x{2*args.c+1} (|T| = {n_t})")
    print(f"{'nfa_max':>10} {'min a(t)':>12} {'mean a(t)':>12} {'max a(t)':>12} {'spread':>8}")
    for nfa in args.nfa:
        a_map, mean_a = nlmeans_a_priori_threshold(args.p, args.c, nfa)
        vals = a_map[a_map > 0]
        spread = vals.max() / vals.min() - 1.0
        print(
            f"{nfa:>10.3g} {vals.min():>12.4f} {mean_a:>12.4f} "
            f"{vals.max():>12.4f} {100*spread:>7.1f}%"
        )

    nfa = args.nfa[0]
    a_map, _ = nlmeans_a_priori_threshold(args.p, args.c, nfa)
    c = args.c
    print(f"\nthreshold profile along the x axis at nfa_max = {nfa:g}:")
    for tx in range(0, c + 1):
        bar = "#" * int(40 * a_map[c, c + tx] / a_map.max()) if tx else ""
        print(f"  t = ({tx:>2}, 0)  a = {a_map[c, c + tx]:>9.4f}  {bar}")


if __name__ == "__main__":
    main()
