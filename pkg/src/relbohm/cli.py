"""Command-line front end.

Exit codes: 0 success; 1 verdict matrix differs from its expectations;
2 numerical failure (non-convergence, null current, caustic, ...);
3 invalid input (malformed JSON, schema violation, bad values).
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np
from scipy import stats

from . import flash as _flash
from . import nonrel as _nr
from . import scenario as _scenario
from . import symmetry as _sym
from .dynamics import coordinate_density, lift_to_leaf, sample_equilibrium, transport
from .errors import NonConvergence, RelBohmError, ValidationError
from .foliation import Leaf

log = logging.getLogger("relbohm")

EXIT_OK, EXIT_MISMATCH, EXIT_NUMERIC, EXIT_INVALID = 0, 1, 2, 3


def _write_json(path, obj):
    path.write_text(json.dumps(_sym._plain(obj), indent=2, sort_keys=True) + "\n")


def _write_csv(path, header, rows):
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])


# -- simulate ------------------------------------------------------------------


def cmd_simulate(args):
    sc = _scenario.load(args.scenario)
    h = _sym.run_history(sc)
    rows = []
    for k, w in enumerate(h.worldlines):
        for s, x in zip(w.s, w.x):
            rows.append((k, s, *x))
    _write_csv(args.out / "trajectories.csv", ["particle", "s", "t", "x", "y", "z"], rows)
    diag = dict(h.diagnostics)
    diag["scenario"] = sc.name
    _write_json(args.out / "diagnostics.json", diag)
    log.info("wrote %d samples for %d particles", len(rows), h.n)
    return EXIT_OK


# -- symmetry ------------------------------------------------------------------


def cmd_symmetry(args):
    source = args.scenario if args.scenario is not None else _scenario.default_suite_path()
    rows = _scenario.load_suite(str(source))
    report = _sym.verdict_matrix(rows, args.threads)
    (args.out / "report.json").write_text(_sym.report_json(report) + "\n")
    if not args.quiet:
        print(_sym.format_matrix(report))
    return EXIT_OK if report["ok"] else EXIT_MISMATCH


# -- equilibrium ---------------------------------------------------------------


def _marginal_expectation(psi, leaf, box, particle, axis, edges, per_dim=400):
    """Bin probabilities of one coordinate under the crossing density, by quadrature."""
    box = np.broadcast_to(np.asarray(box, dtype=float), (psi.n, 3, 2))
    active = [(i, a) for i in range(psi.n) for a in range(3) if box[i, a, 1] > box[i, a, 0]]
    if (particle, axis) not in active:
        raise ValidationError("$.equilibrium.axis: histogram coordinate is pinned by the box")
    per = max(8, int(per_dim ** (1.0 if len(active) == 1 else 2.0 / len(active))))
    grids = []
    for i, a in active:
        lo, hi = box[i, a]
        g = lo + (np.arange(per) + 0.5) * (hi - lo) / per
        grids.append(g)
    mesh = np.meshgrid(*grids, indexing="ij")
    sp = np.broadcast_to(box[..., 0], (mesh[0].size, psi.n, 3)).copy()
    for (i, a), g in zip(active, mesh):
        sp[:, i, a] = g.ravel()
    pts = np.stack([lift_to_leaf(leaf, sp[:, i], i) for i in range(psi.n)], axis=1)
    rho = coordinate_density(psi, leaf, pts)
    coord = sp[:, particle, axis]
    mass, _ = np.histogram(coord, bins=edges, weights=rho)
    return mass / mass.sum()


def _chi2(counts, expected_prob):
    exp = expected_prob * counts.sum()
    keep = exp > 0
    chi2 = float(np.sum((counts[keep] - exp[keep]) ** 2 / exp[keep]))
    dof = int(keep.sum()) - 1
    return chi2, dof, float(stats.chi2.sf(chi2, dof))


def cmd_equilibrium(args):
    sc = _scenario.load(args.scenario)
    if "equilibrium" not in sc.sections:
        raise ValidationError("$.equilibrium: missing")
    eq = sc.sections["equilibrium"]
    fol = sc.foliation()
    psi = sc.psi
    leaf = Leaf(fol, 0, float(eq.get("leaf", 0.0)))
    box = np.broadcast_to(np.asarray(eq["box"], dtype=float), (psi.n, 3, 2)).copy()
    sample = sample_equilibrium(psi, leaf, box, eq["count"], args.seed, threads=args.threads)
    particle, axis = eq.get("axis", [0, 0])
    bins = eq.get("bins", 20)
    pts = sample.points
    target = leaf
    if "transport_to" in eq:
        target = Leaf(fol, 0, float(eq["transport_to"]))
        pts = transport(psi, fol, pts, target.value, sc.integration.ds, threads=args.threads)
        # the transported ensemble is compared on the window it is expected to occupy
        shift = np.median(pts[:, particle, axis + 1]) - np.median(sample.points[:, particle, axis + 1])
        box[particle, axis] += shift
    lo, hi = box[particle, axis]
    edges = np.linspace(lo, hi, bins + 1)
    coord = pts[:, particle, axis + 1]
    inside = (coord >= lo) & (coord <= hi)
    counts, _ = np.histogram(coord[inside], bins=edges)
    expected = _marginal_expectation(psi, target, box, particle, axis, edges)
    chi2, dof, p = _chi2(counts, expected)
    _write_csv(
        args.out / "samples.csv",
        ["member", "particle", "t", "x", "y", "z"],
        ((m, k, *pts[m, k]) for m in range(len(pts)) for k in range(psi.n)),
    )
    _write_csv(
        args.out / "histogram.csv",
        ["bin_lo", "bin_hi", "count", "expected"],
        ((edges[b], edges[b + 1], int(counts[b]), expected[b] * counts.sum()) for b in range(bins)),
    )
    _write_json(
        args.out / "stats.json",
        {
            "scenario": sc.name,
            "count": int(len(pts)),
            "outside_window": int((~inside).sum()),
            "chi2": chi2,
            "dof": dof,
            "p_value": p,
            "acceptance": sample.acceptance,
            "envelope": sample.envelope,
            "rescans": sample.rescans,
            "leaf": target.value,
        },
    )
    log.info("chi2 %.3f on %d dof, p = %.4f", chi2, dof, p)
    return EXIT_OK


# -- flash ---------------------------------------------------------------------


def cmd_flash(args):
    sc = _scenario.load(args.scenario)
    if sc.theory != "flash":
        raise ValidationError("$.theory: flash command needs theory 'flash'")
    state, povms, gens, sec = _sym._flash_case(sc)
    dist = _flash.flash_distribution(state, povms, gens)
    draws = sec.get("draws", 10000)
    rec = _flash.sample_flashes(dist, args.seed, draws, threads=args.threads)
    _write_csv(args.out / "flashes.csv", ["particle", "generation", "cell_id", "t", "x", "y", "z"], rec.rows())
    flat_labels = [tuple(lab) for lab in np.ndindex(dist.table.shape)]
    probs = dist.probabilities().ravel()
    _write_csv(
        args.out / "distribution.csv",
        ["outcome", "probability"],
        ((";".join("-".join(map(str, dist.labels[k][i])) for k, i in enumerate(idx)), p) for idx, p in zip(flat_labels, probs)),
    )
    counts = np.zeros(len(probs), dtype=int)
    index = {lab: j for j, lab in enumerate(flat_labels)}
    lookup = [{tuple(c): i for i, c in enumerate(dist.labels[k])} for k in range(state.n)]
    for d in rec.draws:
        counts[index[tuple(lookup[k][tuple(c)] for k, c in enumerate(d))]] += 1
    exp = probs * draws
    sigma = np.sqrt(draws * probs * (1 - probs))
    z = np.where(sigma > 0, np.abs(counts - exp) / np.where(sigma > 0, sigma, 1), 0.0)
    out = {
        "scenario": sc.name,
        "draws": draws,
        "counts": counts.tolist(),
        "expected": exp.tolist(),
        "max_sigma": float(np.max(z)) if len(z) else 0.0,
        "raw_min_probability": dist.raw_min,
    }
    if draws and np.count_nonzero(probs) > 1:
        out["chi2"], out["dof"], out["p_value"] = _chi2(counts, probs)
    if sc.transforms:
        out["covariance_discrepancy"] = _flash.covariance_check(state, povms, sc.transforms[0], gens)
    _write_json(args.out / "stats.json", out)
    return EXIT_OK


# -- nonrel --------------------------------------------------------------------


def cmd_nonrel(args):
    sc = _scenario.load(args.scenario)
    if "nr" not in sc.sections:
        raise ValidationError("$.nr: missing")
    sec = sc.sections["nr"]
    psi = _nr.NRWaveFunction.from_dict(sec["wavefunction"])
    h = _nr.nr_integrate(psi, sec["positions"], sec.get("t0", 0.0), sec.get("t1", 1.0), sec.get("dt", 1e-3))
    rows = [(k, t, *h.x[j, k]) for j, t in enumerate(h.t) for k in range(psi.n)]
    _write_csv(args.out / "trajectories.csv", ["particle", "t", "x", "y", "z"], rows)
    out = {"scenario": sc.name}
    if "velocity" in sec:
        hb = _nr.galilean_boost(h, sec["velocity"], sec.get("subsystem"))
        ok, diag = _nr.nr_is_solution(hb)
        rows = [(k, t, *hb.x[j, k]) for j, t in enumerate(hb.t) for k in range(psi.n)]
        _write_csv(args.out / "boosted.csv", ["particle", "t", "x", "y", "z"], rows)
        out.update({"boost_is_solution": ok, "residual": diag["trajectory_deviation"], **diag})
    _write_json(args.out / "stats.json", out)
    return EXIT_OK


# -- entry point ---------------------------------------------------------------

COMMANDS = {
    "simulate": (cmd_simulate, "integrate a scenario and write trajectories"),
    "symmetry": (cmd_symmetry, "run a verdict-matrix suite (default: the shipped suite)"),
    "equilibrium": (cmd_equilibrium, "sample quantum equilibrium and histogram it"),
    "flash": (cmd_flash, "flash distribution and sampled flashes"),
    "nonrel": (cmd_nonrel, "non-relativistic trajectories and Galilean boost"),
}


def build_parser():
    parser = argparse.ArgumentParser(prog="relbohm", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_) in COMMANDS.items():
        p = sub.add_parser(name, help=help_)
        p.add_argument("--scenario", type=Path, required=name != "symmetry")
        p.add_argument("--out", type=Path, default=Path("out"))
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--threads", type=int, default=1)
        p.add_argument("--quiet", action="store_true")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(levelname)s %(message)s")
    if not 0 <= args.seed < 2**64:
        print("error: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return EXIT_INVALID
    try:
        args.out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command][0](args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except FileNotFoundError as exc:
        print(f"error: {exc.filename}: no such file", file=sys.stderr)
        return EXIT_INVALID
    except NonConvergence as exc:
        _write_json(
            args.out / "diagnostics.json",
            {"error": "NonConvergence", "max_iter": exc.max_iter, "last_residual": exc.last_residual, **(exc.diagnostics or {})},
        )
        print(f"error: no convergence after {exc.max_iter} iterations (last residual {exc.last_residual:.3e})", file=sys.stderr)
        return EXIT_NUMERIC
    except RelBohmError as exc:
        _write_json(args.out / "diagnostics.json", {"error": type(exc).__name__, "message": str(exc)})
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
