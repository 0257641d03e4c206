"""Minkowski geometry, Lorentz transformations and their Dirac spinor representatives.

Conventions (used by every other module):

* natural units, c = hbar = 1;
* metric signature (+, -, -, -);
* Dirac representation of the gamma matrices;
* transformations are *active*: ``apply(boost_from_velocity(v), (1, 0, 0, 0))``
  is the four-velocity of a particle moving with velocity ``v``.

Four-vectors are plain ``numpy`` arrays whose last axis has length 4, so all
functions broadcast over leading batch axes.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm
from scipy.spatial.transform import Rotation

from .errors import NonTimelikeNormal, SpeedNotSubluminal, UnsupportedTransform

METRIC = np.diag([1.0, -1.0, -1.0, -1.0])
_SIGN = np.array([1.0, -1.0, -1.0, -1.0])

PAULI = np.array(
    [
        [[0, 1], [1, 0]],
        [[0, -1j], [1j, 0]],
        [[1, 0], [0, -1]],
    ],
    dtype=complex,
)

_I2 = np.eye(2, dtype=complex)
_Z2 = np.zeros((2, 2), dtype=complex)

GAMMA = np.array(
    [np.block([[_I2, _Z2], [_Z2, -_I2]])]
    + [np.block([[_Z2, s], [-s, _Z2]]) for s in PAULI]
)
GAMMA0 = GAMMA[0]
# gamma^0 gamma^mu: psi-bar gamma^mu psi == psi^dagger ALPHA[mu] psi
ALPHA = np.einsum("ab,mbc->mac", GAMMA0, GAMMA)
SPIN = np.array([np.block([[s, _Z2], [_Z2, s]]) for s in PAULI])

SPEED_MARGIN = 1e-9


def minkowski_dot(a, b):
    """Return ``a^0 b^0 - a.b`` along the last axis."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return a[..., 0] * b[..., 0] - np.sum(a[..., 1:] * b[..., 1:], axis=-1)


def lower(v):
    """Lower the index of a four-vector (or raise that of a covector)."""
    return np.asarray(v) * _SIGN


def slash(n):
    """Feynman slash ``gamma^mu n_mu`` of a (contravariant) four-vector."""
    n = np.asarray(n, dtype=float)
    return np.tensordot(lower(n), GAMMA, axes=([-1], [0]))


def unit_timelike(v, tol=1e-14):
    """Normalize a future-pointing timelike vector to ``v.v = 1``."""
    v = np.asarray(v, dtype=float)
    norm2 = minkowski_dot(v, v)
    if np.any(norm2 <= tol) or np.any(v[..., 0] <= 0):
        raise NonTimelikeNormal(f"vector {v} is not future timelike")
    return v / np.sqrt(norm2)[..., None]


def check_unit_timelike(n, tol=1e-9):
    n = np.asarray(n, dtype=float)
    if np.any(np.abs(minkowski_dot(n, n) - 1.0) > tol) or np.any(n[..., 0] <= 0):
        raise NonTimelikeNormal(f"normal {n} is not unit future timelike")
    return n


def _boost_matrix(v):
    v = np.asarray(v, dtype=float)
    b2 = float(v @ v)
    gam = 1.0 / np.sqrt(1.0 - b2)
    lam = np.eye(4)
    lam[0, 0] = gam
    lam[0, 1:] = gam * v
    lam[1:, 0] = gam * v
    if b2 > 0:
        lam[1:, 1:] += (gam - 1.0) * np.outer(v, v) / b2
    return lam


def _rotation_matrix(rotvec):
    lam = np.eye(4)
    lam[1:, 1:] = Rotation.from_rotvec(np.asarray(rotvec, dtype=float)).as_matrix()
    return lam


def _boost_spinor(v):
    v = np.asarray(v, dtype=float)
    speed = float(np.linalg.norm(v))
    if speed == 0.0:
        return np.eye(4, dtype=complex)
    rapidity = np.arctanh(speed)
    gen = np.tensordot(v / speed, ALPHA[1:], axes=(0, 0))
    return expm(0.5 * rapidity * gen)


def _rotation_spinor(rotvec):
    rotvec = np.asarray(rotvec, dtype=float)
    return expm(-0.5j * np.tensordot(rotvec, SPIN, axes=(0, 0)))


@dataclass(frozen=True, eq=False)
class LorentzTransform:
    """A proper orthochronous Lorentz transformation.

    ``generators`` records how the matrix was built, as a tuple of
    ``("boost", velocity)`` / ``("rotation", rotation_vector)`` factors in
    matrix-product order.  It is what makes :func:`spinor_rep_of`
    well defined (a rotation by 2 pi and the identity share a matrix but not a
    spinor representative).
    """

    matrix: np.ndarray
    generators: tuple | None = field(default=None)

    def __post_init__(self):
        m = np.array(self.matrix, dtype=float)
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        if m.shape != (4, 4):
            raise UnsupportedTransform("Lorentz matrix must be 4x4")
        if np.max(np.abs(m.T @ METRIC @ m - METRIC)) > 1e-9:
            raise UnsupportedTransform("matrix does not preserve the Minkowski metric")
        if np.linalg.det(m) < 0 or m[0, 0] < 1.0 - 1e-12:
            raise UnsupportedTransform("transform is not proper orthochronous")

    @classmethod
    def identity(cls):
        return cls(np.eye(4), ())

    def __matmul__(self, other: "LorentzTransform") -> "LorentzTransform":
        gens = None
        if self.generators is not None and other.generators is not None:
            gens = tuple(self.generators) + tuple(other.generators)
        return LorentzTransform(self.matrix @ other.matrix, gens)

    def inverse(self) -> "LorentzTransform":
        inv = METRIC @ self.matrix.T @ METRIC
        gens = None
        if self.generators is not None:
            gens = tuple((kind, -np.asarray(p, dtype=float)) for kind, p in reversed(self.generators))
        return LorentzTransform(inv, gens)

    def apply(self, x):
        return apply(self, x)

    def to_dict(self):
        if self.generators is None:
            return {"matrix": self.matrix.tolist()}
        out = []
        for kind, p in self.generators:
            if kind == "boost":
                out.append({"boost": np.asarray(p, dtype=float).tolist()})
            else:
                p = np.asarray(p, dtype=float)
                angle = float(np.linalg.norm(p))
                axis = (p / angle if angle > 0 else np.array([0.0, 0.0, 1.0])).tolist()
                out.append({"rotation": {"axis": axis, "angle": angle}})
        return out


@dataclass(frozen=True, eq=False)
class SpinorRep:
    d_lambda: np.ndarray

    def intertwining_residual(self, lam: LorentzTransform) -> float:
        return intertwining_residual(self.d_lambda, lam.matrix)


@dataclass(frozen=True)
class Hyperplane:
    """The leaf ``{x : n.x = offset}`` with unit future-timelike normal ``n``."""

    normal: np.ndarray
    offset: float

    def __post_init__(self):
        n = check_unit_timelike(np.asarray(self.normal, dtype=float), tol=1e-12)
        object.__setattr__(self, "normal", n)

    def residual(self, x):
        return minkowski_dot(self.normal, x) - self.offset


def boost_from_velocity(v) -> LorentzTransform:
    v = np.asarray(v, dtype=float).reshape(3)
    if np.linalg.norm(v) >= 1.0 - SPEED_MARGIN:
        raise SpeedNotSubluminal(f"|v| = {np.linalg.norm(v)} is not below 1")
    return LorentzTransform(_boost_matrix(v), (("boost", v.copy()),))


def rotation(axis, angle) -> LorentzTransform:
    axis = np.asarray(axis, dtype=float).reshape(3)
    axis = axis / np.linalg.norm(axis)
    rotvec = axis * float(angle)
    return LorentzTransform(_rotation_matrix(rotvec), (("rotation", rotvec),))


def compose(*transforms: LorentzTransform) -> LorentzTransform:
    """Matrix product ``transforms[0] @ transforms[1] @ ...``."""
    out = LorentzTransform.identity()
    for t in transforms:
        out = out @ t
    return out


def apply(lam: LorentzTransform, x):
    return np.asarray(x, dtype=float) @ lam.matrix.T


def _recognize(matrix):
    """Generator data for a bare boost or rotation matrix, else ``None``."""
    m = np.asarray(matrix, dtype=float)
    if abs(m[0, 0] - 1.0) < 1e-12:
        rotvec = Rotation.from_matrix(m[1:, 1:]).as_rotvec()
        return (("rotation", rotvec),)
    if np.max(np.abs(m - m.T)) < 1e-12:
        return (("boost", m[1:, 0] / m[0, 0]),)
    return None


def spinor_rep_of(lam: LorentzTransform) -> SpinorRep:
    """Dirac representative D with ``D^-1 gamma^mu D = Lambda^mu_nu gamma^nu``.

    Boosts map to ``exp(+zeta/2 gamma^0 gamma.n)`` and rotations to
    ``exp(-i theta/2 Sigma.n)``; composites multiply in generator order.  The
    overall sign is the double-cover ambiguity and follows the generators.
    """
    gens = lam.generators
    if gens is None:
        gens = _recognize(lam.matrix)
        if gens is None:
            raise UnsupportedTransform(
                "transform has no generator data and is neither a pure boost nor a rotation"
            )
    d = np.eye(4, dtype=complex)
    for kind, p in gens:
        if kind == "boost":
            d = d @ _boost_spinor(p)
        elif kind == "rotation":
            d = d @ _rotation_spinor(p)
        else:
            raise UnsupportedTransform(f"unknown generator {kind!r}")
    return SpinorRep(d)


def intertwining_residual(d, lam_matrix) -> float:
    """``max_mu || D^-1 gamma^mu D - Lambda^mu_nu gamma^nu ||_inf``."""
    dinv = np.linalg.inv(d)
    lhs = np.einsum("ab,mbc,cd->mad", dinv, GAMMA, d)
    rhs = np.einsum("mn,nab->mab", lam_matrix, GAMMA)
    return float(np.max(np.abs(lhs - rhs)))


def transform_from_spec(spec) -> LorentzTransform:
    """Build a transform from scenario data.

    Accepts ``{"boost": [vx, vy, vz]}``, ``{"rotation": {"axis": [...], "angle": a}}``
    or a list of such entries (composed in the listed order, i.e. the first
    entry is the leftmost factor).
    """
    if isinstance(spec, list):
        return compose(*(transform_from_spec(s) for s in spec))
    if "boost" in spec:
        return boost_from_velocity(spec["boost"])
    if "rotation" in spec:
        r = spec["rotation"]
        return rotation(r["axis"], r["angle"])
    if "matrix" in spec:
        return LorentzTransform(np.asarray(spec["matrix"], dtype=float))
    raise UnsupportedTransform(f"cannot build a transform from {spec!r}")


def pure_boost_to(n) -> LorentzTransform:
    """The pure boost taking (1, 0, 0, 0) to the unit timelike vector ``n``."""
    n = check_unit_timelike(n)
    return boost_from_velocity(n[1:] / n[0])
