"""Space-like surface families: the structures guiding laws (i)-(v).

Every foliation answers two queries for a point ``x`` and particle index
``k``: the leaf label ``label(x, k)`` and the covector ``label_gradient(x, k)``.
The unit future normal follows from the gradient.  Leaves are level sets of
the label, so leaf synchronisation in the integrator is just "advance every
particle to the same label".

Variants:

* :class:`Flat` - parallel hyperplanes, label ``n . x``.
* :class:`Gradient` - level sets of a closed-form scalar field.
* :class:`Distance` - surfaces at constant normal distance from an initial
  graph ``t = f(xi)``; the label is that distance.
* :class:`Momentum` / :class:`PerParticle` - hyperplanes normal to the
  mode-sum momentum of a wave function (total / per particle).
* :class:`Regional` - a piecewise union of foliations over half-space
  regions.  Used to assemble candidate structures where only part of the
  universe was transformed.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import RectBivariateSpline, make_interp_spline
from scipy.optimize import brentq

from . import expr as _expr
from .dirac import MultiTimeWaveFunction, boost_wavefunction, momentum_direction
from .errors import CausticEncountered, NonTimelikeNormal, OutOfRegion, ValidationError
from .minkowski import (
    LorentzTransform,
    apply,
    check_unit_timelike,
    lower,
    minkowski_dot,
    unit_timelike,
)

CAUSTIC_RATIO = 1e-6
SPACELIKE_MARGIN = 1e-6


def normal_from_gradient(g):
    """Unit future normal from a label covector ``d_mu s``."""
    n = lower(g)
    norm2 = minkowski_dot(n, n)
    if np.any(norm2 <= 0) or np.any(n[..., 0] <= 0):
        raise NonTimelikeNormal("label gradient is not future timelike")
    return n / np.sqrt(norm2)[..., None]


class Foliation:
    """Base class; subclasses implement ``label`` and ``label_gradient``."""

    kind = "abstract"
    #: True when the normal is a single constant vector per particle index
    constant_normal = False
    #: True when labels do not depend on the particle index
    uniform = True

    def label(self, x, k=0):
        raise NotImplementedError

    def label_gradient(self, x, k=0):
        raise NotImplementedError

    def normal(self, x, k=0):
        return normal_from_gradient(self.label_gradient(x, k))

    def transformed(self, lam: LorentzTransform) -> "Foliation":
        raise NotImplementedError

    def to_dict(self):
        raise NotImplementedError


@dataclass(frozen=True, eq=False)
class Flat(Foliation):
    normal_vector: np.ndarray
    kind = "flat"
    constant_normal = True

    def __post_init__(self):
        n = check_unit_timelike(np.asarray(self.normal_vector, dtype=float), tol=1e-12)
        object.__setattr__(self, "normal_vector", n)

    def normal_of(self, k=0):
        return self.normal_vector

    def label(self, x, k=0):
        return minkowski_dot(self.normal_of(k), x)

    def label_gradient(self, x, k=0):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(lower(self.normal_of(k)), x.shape).copy()

    def normal(self, x, k=0):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(self.normal_of(k), x.shape).copy()

    def transformed(self, lam):
        return Flat(apply(lam, self.normal_vector))

    def to_dict(self):
        return {"kind": "flat", "normal": self.normal_vector.tolist()}


class Momentum(Flat):
    """Hyperplanes orthogonal to the total mode-sum momentum of ``psi``."""

    kind = "momentum"

    def __init__(self, psi: MultiTimeWaveFunction):
        object.__setattr__(self, "psi", psi)
        super().__init__(momentum_direction(psi))

    def transformed(self, lam):
        return Momentum(boost_wavefunction(self.psi, lam))

    def to_dict(self):
        return {"kind": "momentum"}


class PerParticle(Foliation):
    """Per-particle hyperplanes orthogonal to each particle's mode-sum momentum."""

    kind = "per_particle"
    constant_normal = True
    uniform = False

    def __init__(self, psi: MultiTimeWaveFunction, normals=None):
        self.psi = psi
        if normals is None:
            normals = [momentum_direction(psi, k) for k in range(psi.n)]
        self.normals = np.array([check_unit_timelike(np.asarray(n, dtype=float)) for n in normals])

    def normal_of(self, k=0):
        return self.normals[k]

    def label(self, x, k=0):
        return minkowski_dot(self.normals[k], x)

    def label_gradient(self, x, k=0):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(lower(self.normals[k]), x.shape).copy()

    def normal(self, x, k=0):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(self.normals[k], x.shape).copy()

    def transformed(self, lam):
        return PerParticle(boost_wavefunction(self.psi, lam), apply(lam, self.normals))

    def to_dict(self):
        return {"kind": "per_particle"}


class Gradient(Foliation):
    """Level sets of ``T(Lambda^-1 x)``; ``T`` is a closed-form expression."""

    kind = "gradient"

    def __init__(self, field, transform: LorentzTransform | None = None):
        self.field = _expr.parse(field) if isinstance(field, str) else field
        self.transform = transform
        self._inv = None if transform is None else transform.inverse().matrix

    def _pull(self, x):
        x = np.asarray(x, dtype=float)
        return x if self._inv is None else x @ self._inv.T

    def label(self, x, k=0):
        return self.field(self._pull(x))

    def label_gradient(self, x, k=0):
        g = self.field.gradient(self._pull(x))
        return g if self._inv is None else g @ self._inv

    def transformed(self, lam):
        t = lam if self.transform is None else lam @ self.transform
        return Gradient(self.field, t)

    def to_dict(self):
        out = {"kind": "gradient", "field": getattr(self.field, "source", str(self.field))}
        if self.transform is not None:
            out["transform"] = self.transform.to_dict()
        return out


_AXES = {"x": 1, "y": 2, "z": 3}


class Distance(Foliation):
    """Surfaces at fixed normal proper distance from an initial space-like graph.

    The initial leaf is ``t = f(xi)`` with ``f`` given on a 1-d or 2-d grid
    over the spatial axes named in ``grid`` (remaining axes are flat
    directions).  ``f`` is interpolated by a quintic spline.  A point ``x``
    has label ``s`` when ``x = X0(xi) + s n(xi)`` for the foot point ``xi``
    on the initial leaf; that equation is solved by Newton iteration.
    """

    kind = "distance"

    def __init__(self, grid: dict, values, transform: LorentzTransform | None = None, *, degree=5):
        if not grid or len(grid) > 2:
            raise ValidationError("distance foliation grid must name one or two spatial axes")
        self.grid = {a: np.asarray(g, dtype=float) for a, g in grid.items()}
        for a in self.grid:
            if a not in _AXES:
                raise ValidationError(f"unknown grid axis {a!r}")
        self.values = np.asarray(values, dtype=float)
        self.axes = [_AXES[a] for a in self.grid]
        self.transform = transform
        self._inv = None if transform is None else transform.inverse().matrix
        self._fwd = None if transform is None else transform.matrix
        self.degree = degree
        gs = list(self.grid.values())
        if len(gs) == 1:
            if self.values.shape != gs[0].shape:
                raise ValidationError("values must match the grid shape")
            spl = make_interp_spline(gs[0], self.values, k=degree)
            self._d = [spl, spl.derivative(1), spl.derivative(2), spl.derivative(3)]
        else:
            if self.values.shape != (gs[0].size, gs[1].size):
                raise ValidationError("values must match the grid shape")
            self._spl = RectBivariateSpline(gs[0], gs[1], self.values, kx=degree, ky=degree, s=0)
        self.lo = np.array([g[0] for g in gs])
        self.hi = np.array([g[-1] for g in gs])
        # space-like check on the grid itself
        pts = self.grid_points()
        _, grad, _ = self._graph(pts)
        if np.max(np.sum(grad**2, axis=-1)) >= (1.0 - SPACELIKE_MARGIN) ** 2:
            raise ValidationError("initial leaf is not space-like on its grid (|grad f| >= 1)")

    @classmethod
    def from_function(cls, f, grid: dict, transform=None):
        """Sample ``f`` (a callable on spatial coordinates) on ``grid``."""
        axes = list(grid)
        mesh = np.meshgrid(*[np.asarray(grid[a], dtype=float) for a in axes], indexing="ij")
        return cls(grid, f(*mesh), transform)

    # -- initial graph -----------------------------------------------------
    def grid_points(self):
        """Spatial grid as an array of shape ``(G, 3)``."""
        gs = list(self.grid.values())
        mesh = np.meshgrid(*gs, indexing="ij")
        out = np.zeros((mesh[0].size, 3))
        for ax, m in zip(self.axes, mesh):
            out[:, ax - 1] = m.ravel()
        return out

    def _graph(self, xi):
        """``f``, gradient and Hessian at spatial points ``xi`` (shape (B, 3))."""
        b = xi.shape[0]
        grad = np.zeros((b, 3))
        hess = np.zeros((b, 3, 3))
        if len(self.axes) == 1:
            a = self.axes[0] - 1
            u = xi[:, a]
            f = self._d[0](u)
            grad[:, a] = self._d[1](u)
            hess[:, a, a] = self._d[2](u)
        else:
            a, c = self.axes[0] - 1, self.axes[1] - 1
            u, v = xi[:, a], xi[:, c]
            ev = self._spl.ev
            f = ev(u, v)
            grad[:, a] = ev(u, v, dx=1)
            grad[:, c] = ev(u, v, dy=1)
            hess[:, a, a] = ev(u, v, dx=2)
            hess[:, c, c] = ev(u, v, dy=2)
            hess[:, a, c] = hess[:, c, a] = ev(u, v, dx=1, dy=1)
        return f, grad, hess

    def _frame(self, xi):
        """Initial point, unit normal and the ``xi``-derivatives of both."""
        f, g, h = self._graph(xi)
        b = xi.shape[0]
        w2 = 1.0 - np.sum(g * g, axis=-1)
        if np.any(w2 <= 0):
            raise CausticEncountered("initial leaf is not space-like at the foot point")
        w = np.sqrt(w2)
        x0 = np.concatenate([f[:, None], xi], axis=1)
        n = np.concatenate([np.ones((b, 1)), g], axis=1) / w[:, None]
        gh = np.einsum("bi,bij->bj", g, h)  # g . H_j
        dn = np.zeros((b, 4, 3))
        dn[:, 0, :] = gh / w[:, None] ** 3
        dn[:, 1:, :] = h / w[:, None, None] + g[:, :, None] * gh[:, None, :] / w[:, None, None] ** 3
        dx0 = np.zeros((b, 4, 3))
        dx0[:, 0, :] = g
        dx0[:, 1:, :] = np.eye(3)
        return x0, n, dx0, dn

    def _jacobian(self, xi, s):
        _, n, dx0, dn = self._frame(xi)
        cols = dx0 + s[:, None, None] * dn
        return np.concatenate([cols, n[:, :, None]], axis=2), n

    def jacobian_ratio(self, xi, s):
        """Volume ratio of the normal transport at distance ``s`` (1 at s = 0)."""
        xi = np.atleast_2d(xi)
        s = np.broadcast_to(np.asarray(s, dtype=float), xi.shape[:1])
        j1, _ = self._jacobian(xi, s)
        j0, _ = self._jacobian(xi, np.zeros_like(s))
        return np.linalg.det(j1) / np.linalg.det(j0)

    def _solve(self, y, max_iter=60, tol=1e-14):
        """Foot point ``xi`` and distance ``s`` for points ``y`` (shape (B, 4))."""
        xi = y[:, 1:].copy()
        f, g, _ = self._graph(xi)
        s = (y[:, 0] - f) * np.sqrt(np.clip(1.0 - np.sum(g * g, axis=-1), 1e-12, None))
        slack = 0.1 * (self.hi - self.lo)
        for _ in range(max_iter):
            u = xi[:, np.array(self.axes) - 1]
            if np.any(u < self.lo - slack) or np.any(u > self.hi + slack):
                raise OutOfRegion("point's foot on the initial leaf lies outside the grid box")
            x0, n, dx0, dn = self._frame(xi)
            res = x0 + s[:, None] * n - y
            jac = np.concatenate([dx0 + s[:, None, None] * dn, n[:, :, None]], axis=2)
            step = np.linalg.solve(jac, -res[..., None])[..., 0]
            xi = xi + step[:, :3]
            s = s + step[:, 3]
            if np.max(np.abs(step)) < tol * (1.0 + np.max(np.abs(y))):
                break
        else:
            raise CausticEncountered("foot-point iteration did not converge (near a caustic)")
        ratio = self.jacobian_ratio(xi, s)
        if np.any(ratio <= CAUSTIC_RATIO):
            raise CausticEncountered("point lies beyond a focal point of the initial leaf")
        for j, ax in enumerate(self.axes):
            u = xi[:, ax - 1]
            if np.any(u < self.lo[j] - 1e-12) or np.any(u > self.hi[j] + 1e-12):
                raise OutOfRegion("point's foot on the initial leaf lies outside the grid box")
        return xi, s

    def _local(self, x):
        x = np.asarray(x, dtype=float)
        y = x.reshape(-1, 4)
        if self._inv is not None:
            y = y @ self._inv.T
        return x.shape[:-1], y

    def foot(self, x):
        shape, y = self._local(x)
        xi, s = self._solve(y)
        return xi.reshape(shape + (3,)), s.reshape(shape)

    def label(self, x, k=0):
        return self.foot(x)[1]

    def normal(self, x, k=0):
        shape, y = self._local(x)
        xi, _ = self._solve(y)
        _, n, _, _ = self._frame(xi)
        if self._fwd is not None:
            n = n @ self._fwd.T
        return n.reshape(shape + (4,))

    def label_gradient(self, x, k=0):
        return lower(self.normal(x, k))

    def transformed(self, lam):
        t = lam if self.transform is None else lam @ self.transform
        return Distance(self.grid, self.values, t, degree=self.degree)

    def focal_distance(self):
        """Smallest forward focal distance over the grid (inf if none).

        In 1-d this is ``min (1 - f'^2)^(3/2) / (-f'')`` over points with
        ``f'' < 0``, i.e. the inverse of the largest converging curvature.
        """
        xi = self.grid_points()
        _, n, dx0, dn = self._frame(xi)
        a = np.array([ax - 1 for ax in self.axes])
        # shape operator in the active coordinates: dn = S . dX0 on the leaf
        tang = dx0[:, :, a]
        dn_a = dn[:, :, a]
        shape_ops = np.array([np.linalg.lstsq(t, d, rcond=None)[0] for t, d in zip(tang, dn_a)])
        eig = np.linalg.eigvals(shape_ops).real
        neg = eig[eig < 0]
        return float(np.min(-1.0 / neg)) if neg.size else np.inf

    def to_dict(self):
        out = {
            "kind": "distance",
            "grid": {a: g.tolist() for a, g in self.grid.items()},
            "values": self.values.tolist(),
        }
        if self.transform is not None:
            out["transform"] = self.transform.to_dict()
        return out


@dataclass(frozen=True)
class Region:
    """Half space ``{x : a_mu x^mu < b}`` (plain component sum, no metric)."""

    covector: tuple
    offset: float

    def contains(self, x):
        return np.asarray(x, dtype=float) @ np.asarray(self.covector, dtype=float) < self.offset

    def transformed(self, lam):
        a = np.asarray(self.covector, dtype=float) @ lam.inverse().matrix
        return Region(tuple(a.tolist()), self.offset)


class Regional(Foliation):
    """Piecewise structure: the first region containing ``x`` decides.

    A point in no listed region uses ``default``.  Labels are not required to
    match across region boundaries; callers keep worldlines away from seams.
    """

    kind = "regional"

    def __init__(self, pieces, default: Foliation):
        self.pieces = [(r, f) for r, f in pieces]
        self.default = default
        self.constant_normal = all(f.constant_normal for _, f in self.pieces) and default.constant_normal
        self.uniform = all(f.uniform for f in self.members())

    def members(self):
        return [f for _, f in self.pieces] + [self.default]

    def _dispatch(self, x, method, k, trailing):
        x = np.asarray(x, dtype=float)
        flat = x.reshape(-1, 4)
        out = np.empty((flat.shape[0],) + trailing)
        pending = np.ones(flat.shape[0], dtype=bool)
        for region, fol in self.pieces:
            m = pending & region.contains(flat)
            if m.any():
                out[m] = getattr(fol, method)(flat[m], k)
            pending &= ~m
        if pending.any():
            out[pending] = getattr(self.default, method)(flat[pending], k)
        return out.reshape(x.shape[:-1] + trailing)

    def label(self, x, k=0):
        return self._dispatch(x, "label", k, ())

    def label_gradient(self, x, k=0):
        return self._dispatch(x, "label_gradient", k, (4,))

    def normal(self, x, k=0):
        return self._dispatch(x, "normal", k, (4,))

    def transformed(self, lam):
        return Regional(
            [(r.transformed(lam), f.transformed(lam)) for r, f in self.pieces],
            self.default.transformed(lam),
        )

    def to_dict(self):
        return {
            "kind": "regional",
            "pieces": [
                {"region": {"covector": list(r.covector), "offset": r.offset}, "foliation": f.to_dict()}
                for r, f in self.pieces
            ],
            "default": self.default.to_dict(),
        }


# -- leaves --------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Leaf:
    """The level set ``{y : label(y, k) = value}`` of a foliation.

    ``points``/``normals`` are filled in for transported Distance leaves.
    """

    foliation: Foliation
    k: int
    value: float
    points: np.ndarray | None = field(default=None, repr=False)
    normals: np.ndarray | None = field(default=None, repr=False)

    def residual(self, y):
        return self.foliation.label(y, self.k) - self.value

    def contains(self, y, tol=1e-9):
        return bool(np.all(np.abs(self.residual(y)) < tol))

    def normal(self, y):
        return self.foliation.normal(y, self.k)

    def crossing(self, curve, lo, hi, xtol=1e-14):
        """Point where ``curve(sigma)`` meets the leaf, ``sigma`` in ``[lo, hi]``.

        ``curve`` maps a scalar parameter to a four-vector.  Raises
        ``ValueError`` if the residual does not change sign on the bracket.
        """
        g = lambda sig: float(self.residual(curve(sig)))  # noqa: E731
        sig = brentq(g, lo, hi, xtol=xtol, rtol=4 * np.finfo(float).eps)
        return curve(sig)

    def crossing_polyline(self, pts):
        """Crossing of a sampled curve (rows of ``pts``) by linear interpolation."""
        pts = np.asarray(pts, dtype=float)
        r = self.residual(pts)
        idx = np.nonzero(np.sign(r[:-1]) != np.sign(r[1:]))[0]
        if r[0] == 0:
            return pts[0]
        if not idx.size:
            raise ValueError("sampled curve does not cross the leaf")
        i = idx[0]
        lam = r[i] / (r[i] - r[i + 1])
        a, b = pts[i], pts[i + 1]
        return self.crossing(lambda t: a + t * (b - a), 0.0, 1.0) if lam not in (0.0, 1.0) else a + lam * (b - a)


def leaf_through(fol: Foliation, x, k=0) -> Leaf:
    x = np.asarray(x, dtype=float)
    return Leaf(fol, k, float(fol.label(x, k)))


def normal_at(fol: Foliation, x, k=0):
    return fol.normal(np.asarray(x, dtype=float), k)


def advance_leaf(fol: Distance, leaf, ds, substeps=32) -> Leaf:
    """Transport the initial grid to label ``s + ds`` along the normals.

    ``leaf`` is a :class:`Leaf` of ``fol`` or a bare label.  The transport
    Jacobian is scanned at ``substeps`` intermediate distances; a ratio at or
    below ``1e-6`` (including sign flips) is a caustic.
    """
    if not isinstance(fol, Distance):
        raise ValidationError("advance_leaf needs a distance foliation")
    s0 = leaf.value if isinstance(leaf, Leaf) else float(leaf)
    s1 = s0 + float(ds)
    xi = fol.grid_points()
    for sig in np.linspace(s0, s1, substeps + 1):
        ratio = fol.jacobian_ratio(xi, np.full(xi.shape[0], sig))
        if np.any(ratio <= CAUSTIC_RATIO):
            raise CausticEncountered(f"normal congruence focuses before distance {sig:.6g}")
    x0, n, _, _ = fol._frame(xi)
    pts = x0 + s1 * n
    if fol._fwd is not None:
        pts = pts @ fol._fwd.T
        n = n @ fol._fwd.T
    return Leaf(fol, 0, s1, pts, n)


# -- residuals of the foliation laws ------------------------------------------


def _normal_derivatives(n_field, x, h):
    """``D[..., mu, nu] = d_mu n_nu`` (lowered normal) by central differences."""
    x = np.asarray(x, dtype=float)
    d = np.zeros(x.shape[:-1] + (4, 4))
    for mu in range(4):
        e = np.zeros(4)
        e[mu] = h
        d[..., mu, :] = (lower(n_field(x + e)) - lower(n_field(x - e))) / (2 * h)
    return d


def curl_residual(n_field, x, h=1e-3) -> float:
    """``max |d_mu n_nu - d_nu n_mu|``; vanishes for a gradient of a distance label."""
    d = _normal_derivatives(n_field, x, h)
    return float(np.max(np.abs(d - np.swapaxes(d, -1, -2)), initial=0.0))


def frobenius_residual(n_field, x, h=1e-3) -> float:
    """``max |(n ^ dn)_{lmn}|``, the integrability 3-form, by central differences.

    ``n_field`` maps points (shape (..., 4)) to contravariant unit normals.
    """
    x = np.asarray(x, dtype=float)
    d = _normal_derivatives(n_field, x, h)
    f = d - np.swapaxes(d, -1, -2)
    nl = lower(n_field(x))
    three = (
        np.einsum("...l,...mn->...lmn", nl, f)
        + np.einsum("...m,...nl->...lmn", nl, f)
        + np.einsum("...n,...lm->...lmn", nl, f)
    )
    return float(np.max(np.abs(three), initial=0.0))


def normal_constancy_residual(fol: Foliation, points, k=0) -> float:
    """Largest difference between normals at any two of ``points``."""
    n = fol.normal(np.asarray(points, dtype=float).reshape(-1, 4), k)
    return float(np.max(np.abs(n - n[0]), initial=0.0))


def spacelike_check(leaf: Leaf) -> float:
    """Largest ``v.v`` over tangent vectors between neighbouring leaf points.

    Negative means space-like.  Only meaningful for leaves with ``points``.
    """
    if leaf.points is None or len(leaf.points) < 2:
        raise ValidationError("leaf carries no sampled points")
    v = np.diff(leaf.points, axis=0)
    return float(np.max(minkowski_dot(v, v)))


def foliation_from_spec(spec: dict, psi: MultiTimeWaveFunction | None = None) -> Foliation:
    """Build a foliation from scenario data (see the scenario schema)."""
    from .minkowski import transform_from_spec

    kind = spec["kind"]
    tr = transform_from_spec(spec["transform"]) if "transform" in spec else None
    if kind == "flat":
        fol = Flat(unit_timelike(spec.get("normal", [1.0, 0.0, 0.0, 0.0])))
        return fol.transformed(tr) if tr is not None else fol
    if kind == "gradient":
        return Gradient(spec["field"], tr)
    if kind == "distance":
        return Distance(spec["grid"], spec["values"], tr)
    if kind in ("momentum", "per_particle"):
        if psi is None:
            raise ValidationError(f"{kind} foliation needs a wave function")
        return Momentum(psi) if kind == "momentum" else PerParticle(psi)
    if kind == "regional":
        pieces = [
            (Region(tuple(p["region"]["covector"]), p["region"]["offset"]), foliation_from_spec(p["foliation"], psi))
            for p in spec["pieces"]
        ]
        return Regional(pieces, foliation_from_spec(spec["default"], psi))
    raise ValidationError(f"unknown foliation kind {kind!r}")
