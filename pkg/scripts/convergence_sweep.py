"""Step-size sweep of the leaf integrator on an entangled pair.

Prints endpoint error against a fine reference for each step and the fitted
log-log slope (RK4 should give about 4).
"""
import argparse

import numpy as np

from relbohm.dirac import MultiTimeWaveFunction, make_spinor
from relbohm.dynamics import convergence_sweep, lift_to_leaf
from relbohm.foliation import Flat, Gradient, Leaf


def pair():
    m = lambda p, s="+": make_spinor(p, 1.0, s)  # noqa: E731
    return MultiTimeWaveFunction(
        [
            (1.0, (m([0.8, 0, 0]), m([-0.5, 0.3, 0]))),
            (0.7j, (m([-0.6, 0.2, 0], "-"), m([0.4, 0, 0.5]))),
            (0.5, (m([0, 0.7, 0]), m([0.3, -0.6, 0]))),
        ]
    )


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--theory", choices=["i", "iii"], default="i")
    ap.add_argument("--s-end", type=float, default=4.0)
    ap.add_argument("--steps", type=float, nargs="+", default=[0.4, 0.2, 0.1, 0.05])
    ap.add_argument("--reference", type=float, default=2e-3)
    args = ap.parse_args()
    spatial = np.array([[0.3, 0.1, 0.0], [-0.4, 0.2, 0.1]])
    fol = Flat(np.array([1.0, 0, 0, 0])) if args.theory == "i" else Gradient("t + 0.1*sin(x) - 0.05*y")
    leaf = Leaf(fol, 0, 0.0)
    start = np.array([lift_to_leaf(leaf, x, k) for k, x in enumerate(spatial)])
    r = convergence_sweep(pair(), fol, start, args.s_end, args.steps, args.reference, theory=args.theory)
    print(f"{'step':>8} {'endpoint error':>16}")
    for h, e in zip(r.steps, r.errors):
        print(f"{h:8.4f} {e:16.3e}")
    print(f"slope {r.slope:.3f}")


if __name__ == "__main__":
    main()
