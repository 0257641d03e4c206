"""Regenerate ``src/relbohm/data/default_suite.json``.

The suite holds the scenarios behind the verdict matrix and, per row, the
expected verdict.  Run from the repository root.
"""
import json
from pathlib import Path

OUT = Path(__file__).resolve().parents[1] / "src" / "relbohm" / "data" / "default_suite.json"


def mode(p, spin="+", mass=1.0):
    return {"mass": mass, "p": list(p), "spin": spin}


def wf(*terms):
    return {"terms": [{"coefficient": list(c), "modes": list(ms)} for c, ms in terms]}


PA, PB, PC, PD = (0.3, 0.0, 0.1), (-0.2, 0.25, 0.0), (0.1, -0.2, 0.15), (-0.25, 0.0, -0.1)

# mildly entangled pair used for the whole-universe rows
PAIR = wf(
    ((1.0, 0.0), [mode(PA, "+"), mode(PB, "-")]),
    ((0.0, 0.6), [mode(PB, "+"), mode(PA, "+")]),
    ((0.3, 0.0), [mode(PC, "-"), mode(PD, "+")]),
)
PAIR_START = {"points": [[0.0, -0.5, 0.0, 0.0], [0.0, 0.6, 0.2, 0.0]]}
PAIR_LEAF = {"leaf": 0.0, "spatial": [p[1:] for p in PAIR_START["points"]]}

# subsystem: entangled pair near the origin, one particle far out along x
SUB_ENT = wf(
    ((1.0, 0.0), [mode(PA, "+"), mode(PB, "-")]),
    ((0.0, 0.7), [mode(PB, "+"), mode(PA, "-")]),
)
SUB_SEP = wf(
    ((1.0, 0.0), [mode(PA, "+"), mode(PB, "-")]),
    ((0.0, 0.7), [mode(PA, "+"), mode(PC, "-")]),
    ((0.5, 0.0), [mode(PD, "-"), mode(PB, "-")]),
    ((0.0, 0.35), [mode(PD, "-"), mode(PC, "-")]),
)
ENV = wf(((1.0, 0.0), [mode(PC, "+")]), ((0.4, -0.3), [mode(PD, "-")]))
SEAM = {"covector": [0.0, 1.0, 0.0, 0.0], "offset": 2.0}
TRIPLE_START = {"points": [[0.0, -0.5, 0.0, 0.0], [0.0, 0.5, 0.2, 0.0], [0.0, 3.5, 0.0, 0.1]]}
TRIPLE_LEAF = {"leaf": 0.0, "spatial": [p[1:] for p in TRIPLE_START["points"]]}

DISTANCE = {
    "kind": "distance",
    "grid": {"x": [-4.0 + 0.25 * i for i in range(45)]},
    "values": None,
}
GRADIENT = {"kind": "gradient", "field": "t + 0.15*sin(x)*cos(0.5*y) - 0.05*z"}
BOOST = [{"boost": [0.3, -0.1, 0.05]}]
SUB_BOOST = [{"boost": [0.25, 0.1, 0.0]}]


def distance():
    import math

    d = dict(DISTANCE)
    d["values"] = [0.2 * math.sin(0.8 * x) for x in d["grid"]["x"]]
    return d


def relativistic(name, theory, psi=None, split=None, foliation=None, start=PAIR_START, transforms=BOOST, integration=None):
    sc = {"version": 1, "name": name, "theory": theory, "initial": start, "transforms": transforms}
    if psi is not None:
        sc["wavefunction"] = psi
    if split is not None:
        sc["split"] = split
    if foliation is not None:
        sc["foliation"] = foliation
    sc["integration"] = integration or {"s_max": 1.0, "ds": 1e-3, "tol": 1e-6, "law_tol": 1e-6}
    return sc


def split(sub):
    return {"subsystem": sub, "environment": ENV, "region": SEAM}


RELAXED = {"ds": 1e-3, "span": [0.2, 0.3], "tol": 1e-6, "law_tol": 1e-6, "max_iter": 30}
FOL = {"i": {"kind": "flat"}, "ii": distance(), "iii": GRADIENT, "iv": {"kind": "momentum"}, "v": {"kind": "per_particle"}}

scenarios = {}
for th in ("i", "ii", "iii", "iv", "v", "vi"):
    relaxed = th in ("v", "vi")
    integ = RELAXED if relaxed else None
    scenarios[f"pair-{th}"] = relativistic(
        f"entangled pair, law {th}", th, PAIR, foliation=FOL.get(th), start=PAIR_START if relaxed else PAIR_LEAF, integration=integ
    )
    scenarios[f"split-{th}"] = relativistic(
        f"entangled subsystem, law {th}", th, split=split(SUB_ENT), foliation=FOL.get(th), start=TRIPLE_START if relaxed else TRIPLE_LEAF,
        transforms=SUB_BOOST, integration=integ,
    )
scenarios["split-iv-separable"] = relativistic(
    "separable subsystem, law iv", "iv", split=split(SUB_SEP), foliation=FOL["iv"], start=TRIPLE_LEAF, transforms=SUB_BOOST
)
scenarios["flash"] = {
    "version": 1,
    "name": "flash law, product pair",
    "theory": "flash",
    "wavefunction": wf(
        ((1.0, 0.0), [mode(PA, "+"), mode(PB, "-")]),
        ((0.5, 0.0), [mode(PB, "+"), mode(PB, "-")]),
        ((0.0, 0.2), [mode(PA, "+"), mode(PA, "-")]),
        ((0.0, 0.1), [mode(PB, "+"), mode(PA, "-")]),
    ),
    "transforms": BOOST,
    "flash": {"cells": [[0, 0, 0, 0], [0, 1.5, 0, 0], [0, 3.0, 0, 0]], "smear": 0.5, "generations": [2, 1], "step": 0.6, "split": 1},
}
scenarios["nr"] = {
    "version": 1,
    "name": "non-relativistic packets, Galilean boost",
    "theory": "nr",
    "nr": {
        "wavefunction": {
            "terms": [
                {"coefficient": [1.0, 0.0], "packets": [
                    {"mass": 1.0, "center": [-0.5, 0.0, 0.0], "p": [0.2, 0.0, 0.0], "width": 1.0},
                    {"mass": 1.0, "center": [4.0, 0.0, 0.0], "p": [-0.1, 0.1, 0.0], "width": 1.0}]},
                {"coefficient": [0.0, 0.6], "packets": [
                    {"mass": 1.0, "center": [0.5, 0.0, 0.0], "p": [-0.2, 0.1, 0.0], "width": 1.0},
                    {"mass": 1.0, "center": [4.0, 0.0, 0.0], "p": [-0.1, 0.1, 0.0], "width": 1.0}]},
            ]
        },
        "positions": [[0.1, 0.2, 0.0], [4.2, -0.1, 0.3]],
        "t0": 0.0, "t1": 1.0, "dt": 1e-3,
        "velocity": [0.3, -0.2, 0.1],
        "subsystem": [0],
    },
}
scenarios["newtonian"] = {
    "version": 1,
    "name": "frame-field Newtonian clusters",
    "theory": "newtonian",
    "transforms": [{"boost": [0.4, 0.1, 0.0]}],
    "newtonian": {
        "masses": [1.0, 1.0, 1.0, 1.0],
        "positions": [[0.5, 0.0, 0.0], [-0.5, 0.0, 0.0], [10.5, 0.0, 0.0], [9.5, 0.0, 0.0]],
        "velocities": [[0.0, 0.15, 0.0], [0.0, -0.15, 0.0], [0.0, 0.15, 0.0], [0.0, -0.15, 0.0]],
        "clusters": [[0, 1], [2, 3]],
        "subsystem": 0,
        "coupling": 0.05,
        "softening": 0.1,
        "tau_end": 2.0,
        "dtau": 1e-3,
    },
}

rows = [{"name": f"whole universe, law {th}", "test": "whole-universe", "scenario": f"pair-{th}", "expect": "pass"} for th in ("i", "ii", "iii", "iv", "v", "vi")]
rows += [
    {"name": "whole universe, flash law", "test": "whole-universe", "scenario": "flash", "expect": "pass"},
    {"name": "whole universe, NR Galilean", "test": "whole-universe", "scenario": "nr", "expect": "pass"},
    {"name": "whole universe, Newtonian demo", "test": "whole-universe", "scenario": "newtonian", "expect": "pass"},
]
expect = {"i": "fail", "ii": "pass", "iii": "pass", "iv": "fail", "v": "pass", "vi": "pass"}
rows += [{"name": f"subsystem, law {th}", "test": "subsystem", "scenario": f"split-{th}", "expect": e} for th, e in expect.items()]
rows += [
    {"name": "subsystem, law iv, separable subsystem", "test": "subsystem", "scenario": "split-iv-separable", "expect": "pass"},
    {"name": "subsystem, flash law", "test": "subsystem", "scenario": "flash", "expect": "pass"},
    {"name": "subsystem, NR Galilean", "test": "subsystem", "scenario": "nr", "expect": "pass"},
    {"name": "subsystem, Newtonian demo", "test": "subsystem", "scenario": "newtonian", "expect": "fail"},
]

if __name__ == "__main__":
    OUT.write_text(json.dumps({"version": 1, "scenarios": scenarios, "rows": rows}, indent=1) + "\n")
    print(f"wrote {len(rows)} rows to {OUT}")
