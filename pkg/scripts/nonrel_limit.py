"""Relativistic vs Schroedinger-Bohm velocities for slow counter-propagating modes.

For each momentum-to-mass ratio, prints the relative velocity discrepancy and
that discrepancy divided by the ratio squared.
"""
import argparse

from relbohm.nonrel import limit_probe


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("ratios", type=float, nargs="*", default=[0.2, 0.1, 0.05, 0.025, 0.0125])
    args = ap.parse_args()
    print(f"{'p/m':>8} {'relative':>12} {'absolute':>12} {'rel/(p/m)^2':>12}")
    prev = None
    for r in args.ratios:
        d = limit_probe(r)
        line = f"{r:8.4f} {d['relative']:12.3e} {d['absolute']:12.3e} {d['relative'] / r**2:12.4f}"
        if prev is not None:
            line += f"   ratio to previous {prev / d['relative']:.2f}"
        print(line)
        prev = d["relative"]


if __name__ == "__main__":
    main()
