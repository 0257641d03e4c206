"""Scenario files: JSON in, validated objects out.

Every scenario is checked against ``data/scenario.schema.json`` on load;
schema and semantic failures raise :class:`ValidationError` with the JSON
path of the offending value in the message (``$.integration.ds: ...``).
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cache
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from .dirac import MultiTimeWaveFunction
from .errors import ValidationError
from .foliation import Region, foliation_from_spec
from .minkowski import LorentzTransform, transform_from_spec

MASS_RANGE = (1e-2, 1e2)
DEFAULT_FOLIATION = {"i": {"kind": "flat"}, "iv": {"kind": "momentum"}, "v": {"kind": "per_particle"}}


@cache
def schema():
    return json.loads(resources.files("relbohm").joinpath("data/scenario.schema.json").read_text())


def _path(parts):
    out = "$"
    for p in parts:
        out += f"[{p}]" if isinstance(p, int) else f".{p}"
    return out


def validate(doc: dict) -> None:
    validator = jsonschema.Draft202012Validator(schema())
    errors = sorted(validator.iter_errors(doc), key=lambda e: (len(e.absolute_path), list(map(str, e.absolute_path))))
    if errors:
        worst = max(errors, key=lambda e: len(e.absolute_path))
        raise ValidationError(f"{_path(worst.absolute_path)}: {worst.message}")


@dataclass(eq=False)
class SubsystemSplit:
    """``psi = psi_s (x) psi_e``; the subsystem is particles ``0 .. size-1``."""

    psi_s: MultiTimeWaveFunction
    psi_e: MultiTimeWaveFunction
    region: Region

    @property
    def size(self):
        return self.psi_s.n

    @property
    def psi(self):
        return self.psi_s.tensor(self.psi_e)

    def factorization_residual(self, seed=0, count=20) -> float:
        """``max |psi - psi_s (x) psi_e|`` at random configurations (relative to the peak)."""
        rng = np.random.default_rng(seed)
        psi = self.psi
        worst = 0.0
        for _ in range(count):
            xs = rng.normal(size=(psi.n, 4))
            full = psi.evaluate(xs)
            prod = np.multiply.outer(self.psi_s.evaluate(xs[: self.size]), self.psi_e.evaluate(xs[self.size :]))
            worst = max(worst, float(np.max(np.abs(full - prod)) / max(1.0, np.max(np.abs(full)))))
        return worst


@dataclass
class Integration:
    s_max: float = 1.0
    ds: float = 1e-3
    tol: float = 1e-6
    law_tol: float = 1e-6
    span: tuple = (0.2, 0.5)
    max_iter: int = 50
    limit: float | None = None
    pad: float = 0.5


@dataclass(eq=False)
class Scenario:
    theory: str
    name: str = ""
    psi: MultiTimeWaveFunction | None = None
    split: SubsystemSplit | None = None
    foliation_spec: dict | None = None
    initial: dict | None = None
    transforms: list = field(default_factory=list)
    integration: Integration = field(default_factory=Integration)
    sections: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict)

    def foliation(self, psi=None):
        spec = self.foliation_spec or DEFAULT_FOLIATION.get(self.theory)
        if spec is None:
            raise ValidationError(f"$.foliation: theory {self.theory!r} needs an explicit foliation")
        return foliation_from_spec(spec, self.psi if psi is None else psi)

    def transform(self, index=0) -> LorentzTransform:
        if not self.transforms:
            raise ValidationError("$.transforms: scenario declares no transform")
        return self.transforms[index]

    def initial_points(self, fol=None):
        """``(N, 4)`` initial points; ``{"leaf", "spatial"}`` entries are lifted onto the leaf."""
        from .dynamics import lift_to_leaf
        from .foliation import Leaf

        if self.initial is None:
            raise ValidationError("$.initial: missing")
        if "points" in self.initial:
            pts = np.asarray(self.initial["points"], dtype=float)
        else:
            fol = self.foliation() if fol is None else fol
            sp = np.asarray(self.initial["spatial"], dtype=float)
            leaf = Leaf(fol, 0, float(self.initial["leaf"]))
            pts = np.array([lift_to_leaf(leaf, sp[k], k) for k in range(len(sp))])
        if self.psi is not None and len(pts) != self.psi.n:
            raise ValidationError(f"$.initial: {len(pts)} points for {self.psi.n} particles")
        return pts


def _check_masses(psi, where):
    for k, m in enumerate(psi.masses):
        if not MASS_RANGE[0] <= m <= MASS_RANGE[1]:
            raise ValidationError(f"{where}: mass {m} of particle {k} outside the natural-unit range {MASS_RANGE}")


def from_dict(doc: dict) -> Scenario:
    validate(doc)
    theory = doc["theory"]
    psi = split = None
    if "split" in doc:
        sp = doc["split"]
        r = sp["region"]
        split = SubsystemSplit(
            MultiTimeWaveFunction.from_dict(sp["subsystem"]),
            MultiTimeWaveFunction.from_dict(sp["environment"]),
            Region(tuple(r["covector"]), float(r["offset"])),
        )
        psi = split.psi
        if "wavefunction" in doc:
            raise ValidationError("$.wavefunction: give either a wave function or a split, not both")
    elif "wavefunction" in doc:
        psi = MultiTimeWaveFunction.from_dict(doc["wavefunction"])
    if psi is not None:
        _check_masses(psi, "$.split" if split else "$.wavefunction")
    if theory in ("i", "ii", "iii", "iv", "v", "vi") and psi is None:
        raise ValidationError(f"$.wavefunction: theory {theory!r} needs a wave function")
    integ = Integration(**{k: (tuple(v) if k == "span" else v) for k, v in doc.get("integration", {}).items()})
    transforms = [transform_from_spec(t) for t in doc.get("transforms", [])]
    sections = {k: doc[k] for k in ("flash", "nr", "newtonian", "equilibrium") if k in doc}
    if "newtonian" in sections:
        nw = sections["newtonian"]
        n = len(nw["masses"])
        for key in ("positions", "velocities"):
            if len(nw[key]) != n:
                raise ValidationError(f"$.newtonian.{key}: expected {n} entries")
        for c, cl in enumerate(nw["clusters"]):
            for j, idx in enumerate(cl):
                if idx >= n:
                    raise ValidationError(f"$.newtonian.clusters[{c}][{j}]: particle {idx} out of range")
    if "nr" in sections and "subsystem" in sections["nr"]:
        n = len(sections["nr"]["positions"])
        for j, idx in enumerate(sections["nr"]["subsystem"]):
            if idx >= n:
                raise ValidationError(f"$.nr.subsystem[{j}]: particle {idx} out of range")
    sc = Scenario(
        theory=theory,
        name=doc.get("name", ""),
        psi=psi,
        split=split,
        foliation_spec=doc.get("foliation"),
        initial=doc.get("initial"),
        transforms=transforms,
        integration=integ,
        sections=sections,
        raw=doc,
    )
    if sc.initial is not None and psi is not None:
        count = len(sc.initial.get("points", sc.initial.get("spatial", [])))
        if count != psi.n:
            raise ValidationError(f"$.initial: {count} points for {psi.n} particles")
    return sc


def read_json(path) -> dict:
    text = Path(path).read_text()
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: malformed JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from None


def load(path) -> Scenario:
    return from_dict(read_json(path))


def load_suite(source) -> list:
    """Rows ``{"name", "test", "scenario", "expect"}`` from a suite file or dict.

    ``scenario`` may be an inline scenario or the name of an entry in the
    suite's ``scenarios`` table.
    """
    doc = read_json(source) if isinstance(source, (str, Path)) else source
    if not isinstance(doc, dict) or "rows" not in doc:
        raise ValidationError("$.rows: missing")
    table = doc.get("scenarios", {})
    rows = []
    for i, row in enumerate(doc["rows"]):
        for key in ("name", "test", "scenario", "expect"):
            if key not in row:
                raise ValidationError(f"$.rows[{i}].{key}: missing")
        if row["test"] not in ("whole-universe", "subsystem"):
            raise ValidationError(f"$.rows[{i}].test: unknown test {row['test']!r}")
        if row["expect"] not in ("pass", "fail"):
            raise ValidationError(f"$.rows[{i}].expect: must be 'pass' or 'fail'")
        ref = row["scenario"]
        if isinstance(ref, str):
            if ref not in table:
                raise ValidationError(f"$.rows[{i}].scenario: unknown scenario {ref!r}")
            ref = table[ref]
        try:
            sc = from_dict(ref)
        except ValidationError as exc:
            raise ValidationError(f"$.rows[{i}].scenario{str(exc)[1:]}") from None
        rows.append({"name": row["name"], "test": row["test"], "scenario": sc, "expect": row["expect"]})
    return rows


def default_suite_path():
    return resources.files("relbohm").joinpath("data/default_suite.json")
