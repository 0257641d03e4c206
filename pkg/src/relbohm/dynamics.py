"""Worldline integration under the guidance law.

Two integrators cover the six surface prescriptions:

* :func:`integrate` handles the foliation-based laws (i)-(iv).  All N
  particles are advanced together from leaf to leaf of the foliation with
  fixed-step RK4 in the leaf label ``s``: ``dX_k/ds = J_k / (ds . J_k)`` keeps
  every particle on the leaf with label ``s``.
* :func:`integrate_relaxed` handles laws (v) and (vi), whose surfaces depend
  on where the *other* worldlines are.  It uses Gauss-Seidel waveform
  relaxation: each worldline is re-solved as an ODE against the current
  iterates of the others until nothing moves by more than ``tol``.

Worldlines store their samples, the tangent ``dx/ds`` at every sample and the
index of the initial sample.  The tangents make cubic Hermite interpolation
available for crossing searches, so interpolation error stays at the level
of the RK4 error.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dirac import CurrentKernel, MultiTimeWaveFunction
from .errors import (
    CrossingNotFound,
    EnvelopeTooSmall,
    LeftSimulationRegion,
    NodeEncountered,
    NonConvergence,
    NullCurrent,
    OutOfRegion,
    ValidationError,
)
from .foliation import Flat, Foliation, Leaf, PerParticle, normal_from_gradient
from .minkowski import apply, lower, minkowski_dot, unit_timelike
from .parallel import chunked_map, chunks, member_rng

THEORIES = ("i", "ii", "iii", "iv", "v", "vi")
LEAF_THEORIES = ("i", "ii", "iii", "iv")
RELAXED_THEORIES = ("v", "vi")
NULL_CURRENT = 1e-14
SUPPORT_DENSITY = 1e-12
E0 = np.array([1.0, 0.0, 0.0, 0.0])


# -- data types ----------------------------------------------------------------


def _hermite(x0, x1, v0, v1, dt, t):
    t2, t3 = t * t, t * t * t
    return (
        (2 * t3 - 3 * t2 + 1) * x0
        + (t3 - 2 * t2 + t) * dt * v0
        + (-2 * t3 + 3 * t2) * x1
        + (t3 - t2) * dt * v1
    )


@dataclass(eq=False)
class Worldline:
    """Samples ``x[j]`` at ascending parameters ``s[j]`` with tangents ``v[j] = dx/ds``."""

    s: np.ndarray
    x: np.ndarray
    v: np.ndarray
    origin: int = 0

    def __post_init__(self):
        self.s = np.asarray(self.s, dtype=float)
        self.x = np.asarray(self.x, dtype=float)
        self.v = np.asarray(self.v, dtype=float)

    def __len__(self):
        return len(self.s)

    @property
    def initial_point(self):
        return self.x[self.origin]

    def at(self, sigma):
        """Hermite interpolation at parameter ``sigma`` (inside the sampled range)."""
        j = int(np.clip(np.searchsorted(self.s, sigma) - 1, 0, len(self.s) - 2))
        dt = self.s[j + 1] - self.s[j]
        t = (sigma - self.s[j]) / dt
        return _hermite(self.x[j], self.x[j + 1], self.v[j], self.v[j + 1], dt, t)

    def cross_hyperplane(self, normal, offset, limit=np.inf):
        """Point where ``normal . x = offset`` along the curve.

        ``normal . x`` is monotone along a causal curve, so the bracketing
        segment is found by bisection on the samples and refined by Newton
        on the Hermite cubic.  Beyond either end the curve is continued
        along its end tangent for at most ``limit`` in parameter.
        """
        w = lower(normal)
        h = self.x @ w - offset
        j = int(np.searchsorted(h, 0.0))
        if j == 0 or j == len(h):
            end = 0 if j == 0 else len(h) - 1
            if h[end] == 0.0:
                return self.x[end].copy()
            rate = self.v[end] @ w
            dsig = -h[end] / rate
            if rate <= 0 or abs(dsig) > limit:
                raise CrossingNotFound(
                    f"worldline does not reach the surface within {limit:g} of its end"
                )
            return self.x[end] + dsig * self.v[end]
        a = j - 1
        ha, hb = h[a], h[j]
        dt = self.s[j] - self.s[a]
        da, db = dt * (self.v[a] @ w), dt * (self.v[j] @ w)
        t = ha / (ha - hb)
        for _ in range(20):
            t2, t3 = t * t, t * t * t
            f = (2 * t3 - 3 * t2 + 1) * ha + (t3 - 2 * t2 + t) * da + (-2 * t3 + 3 * t2) * hb + (t3 - t2) * db
            fp = (6 * t2 - 6 * t) * ha + (3 * t2 - 4 * t + 1) * da + (-6 * t2 + 6 * t) * hb + (3 * t2 - 2 * t) * db
            step = f / fp
            t -= step
            if abs(step) < 1e-15:
                break
        return _hermite(self.x[a], self.x[j], self.v[a], self.v[j], dt, t)

    def cross_leaf(self, leaf: Leaf, limit=np.inf):
        """Crossing with an arbitrary leaf (label level set)."""
        fol = leaf.foliation
        if isinstance(fol, Flat) or (isinstance(fol, PerParticle)):
            n = fol.normal_of(leaf.k)
            return self.cross_hyperplane(n, leaf.value, limit)
        r = leaf.residual(self.x)
        exact = np.nonzero(r == 0.0)[0]
        if exact.size:
            return self.x[exact[0]].copy()
        idx = np.nonzero(np.sign(r[:-1]) != np.sign(r[1:]))[0]
        if not idx.size:
            raise CrossingNotFound("worldline does not cross the leaf within its samples")
        a = idx[0]
        dt = self.s[a + 1] - self.s[a]
        curve = lambda t: _hermite(self.x[a], self.x[a + 1], self.v[a], self.v[a + 1], dt, t)  # noqa: E731
        return leaf.crossing(curve, 0.0, 1.0)

    def causal_increments(self):
        """Minimum of ``dx.dx`` and of ``dx^0`` over consecutive samples."""
        d = np.diff(self.x, axis=0)
        return float(np.min(minkowski_dot(d, d))), float(np.min(d[:, 0]))

    def transformed(self, lam):
        return Worldline(self.s.copy(), apply(lam, self.x), apply(lam, self.v), self.origin)

    def to_dict(self):
        return {"s": self.s.tolist(), "x": self.x.tolist(), "v": self.v.tolist(), "origin": self.origin}

    @classmethod
    def from_dict(cls, d):
        return cls(np.array(d["s"]), np.array(d["x"]), np.array(d["v"]), d.get("origin", 0))


@dataclass(eq=False)
class LeafConfiguration:
    leaf: Leaf
    points: np.ndarray

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float)

    def residual(self) -> float:
        fol = self.leaf.foliation
        return float(
            max(abs(fol.label(self.points[i], i) - self.leaf.value) for i in range(len(self.points)))
        )


@dataclass(eq=False)
class UniverseHistory:
    psi: MultiTimeWaveFunction
    theory: str
    foliation: Foliation | None
    worldlines: list
    ds: float
    diagnostics: dict = field(default_factory=dict)

    @property
    def n(self):
        return len(self.worldlines)

    def initial_points(self):
        return np.array([w.initial_point for w in self.worldlines])

    def max_sample_distance(self, other: "UniverseHistory") -> float:
        """Sup distance between corresponding samples (same sampling assumed)."""
        return float(
            max(np.max(np.abs(a.x - b.x)) for a, b in zip(self.worldlines, other.worldlines))
        )


# -- velocity field ------------------------------------------------------------


def _normalized(j):
    jj = minkowski_dot(j, j)
    if jj > 1e-24 * j[0] ** 2:
        return j / np.sqrt(jj)
    return j / j[0]


def _check_current(j):
    mag = np.max(np.abs(j), axis=-1)
    if np.any(mag < NULL_CURRENT):
        raise NullCurrent("surface-contracted current vanishes (node of the wave function)")


def velocity_field(psi, fol: Foliation, config: LeafConfiguration, k: int):
    """Unit direction of particle ``k``'s guidance current on ``config``.

    For a :class:`PerParticle` foliation ``config`` holds the crossings of the
    hyperplane of particle ``k``, whose normal is used at every slot.
    """
    pts = np.asarray(config.points if isinstance(config, LeafConfiguration) else config, dtype=float)
    kernel = CurrentKernel(psi)
    if isinstance(fol, PerParticle):
        normals = np.broadcast_to(fol.normal_of(k), pts.shape)
    else:
        normals = np.array([fol.normal(pts[i], i) for i in range(len(pts))])
    j = kernel.current(pts, normals, k)
    _check_current(j)
    return _normalized(j)


# -- laws (i)-(iv) -------------------------------------------------------------


class _LeafField:
    def __init__(self, psi, fol, bounds=None):
        self.kernel = CurrentKernel(psi)
        self.fol = fol
        self.n = psi.n
        self.bounds = None if bounds is None else np.broadcast_to(np.asarray(bounds, float), (psi.n, 3, 2))
        self.min_causal = np.inf

    def _per_particle(self, method, x, axis=-2):
        try:
            if self.fol.uniform:
                return getattr(self.fol, method)(x, 0)
            return np.stack([getattr(self.fol, method)(x[..., i, :], i) for i in range(self.n)], axis=axis)
        except OutOfRegion as exc:
            raise LeftSimulationRegion(str(exc)) from exc

    def __call__(self, x):
        g = self._per_particle("label_gradient", x)
        normals = normal_from_gradient(g)
        j = self.kernel.currents(x, normals)
        _check_current(j)
        self.min_causal = min(self.min_causal, float(np.min(minkowski_dot(j, j) / j[..., 0] ** 2)))
        gj = np.sum(g * j, axis=-1)
        if np.any(gj <= 0):
            raise NullCurrent("current is not transverse to the leaf")
        return j / gj[..., None]

    def labels(self, x):
        return self._per_particle("label", x, axis=-1)

    def check_bounds(self, x):
        if self.bounds is None:
            return
        sp = x[..., 1:]
        if np.any(sp < self.bounds[..., 0]) or np.any(sp > self.bounds[..., 1]):
            raise LeftSimulationRegion("a particle left the simulation box")


def _leaf_rk4(fieldfn, x, s0, nsteps, h, *, record=False, project=True):
    xs = [x] if record else None
    vs = [] if record else None
    s = s0
    for _ in range(nsteps):
        k1 = fieldfn(x)
        k2 = fieldfn(x + 0.5 * h * k1)
        k3 = fieldfn(x + 0.5 * h * k2)
        k4 = fieldfn(x + h * k3)
        x = x + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        s = s + h
        if project:
            for _ in range(2):
                r = fieldfn.labels(x) - s
                x = x - r[..., None] * k4
        fieldfn.check_bounds(x)
        if record:
            xs.append(x)
            vs.append(k1)
    if record:
        vs.append(fieldfn(x))
        return np.array(xs), np.array(vs)
    return x


def _common_label(fol, pts, tol=1e-9):
    labels = np.array([fol.label(pts[i], i) for i in range(len(pts))])
    if np.max(labels) - np.min(labels) > tol:
        raise ValidationError("initial points do not lie on a common leaf")
    return float(labels[0])


def integrate(
    psi: MultiTimeWaveFunction,
    fol: Foliation,
    initial,
    s_max: float,
    ds: float,
    *,
    theory: str = "i",
    bounds=None,
) -> UniverseHistory:
    """Leaf-synchronised RK4 from the initial leaf to the leaf labelled ``s_max``.

    ``initial`` is a :class:`LeafConfiguration` or an ``(N, 4)`` array of
    points on a common leaf.  ``s_max`` below the initial label integrates
    backwards.
    """
    if theory not in LEAF_THEORIES:
        raise ValidationError(f"integrate handles laws i-iv, not {theory!r}")
    pts = np.asarray(initial.points if isinstance(initial, LeafConfiguration) else initial, dtype=float)
    pts = psi._check_arity(pts)
    s0 = _common_label(fol, pts)
    fieldfn = _LeafField(psi, fol, bounds)
    rho = equilibrium_density(psi, Leaf(fol, 0, s0), pts)
    if rho <= SUPPORT_DENSITY:
        raise NodeEncountered(f"initial configuration has density {rho:.3e}")
    nsteps = int(round(abs(s_max - s0) / ds))
    h = ds if s_max >= s0 else -ds
    project = not fol.constant_normal
    xs, vs = _leaf_rk4(fieldfn, pts[None], s0, nsteps, h, record=True, project=project)
    xs, vs = xs[:, 0], vs[:, 0]
    svals = s0 + h * np.arange(nsteps + 1)
    origin = 0
    if h < 0:
        xs, vs, svals = xs[::-1], vs[::-1], svals[::-1]
        origin = nsteps
    worldlines = [Worldline(svals.copy(), xs[:, k].copy(), vs[:, k].copy(), origin) for k in range(psi.n)]
    diag = {
        "theory": theory,
        "steps": nsteps,
        "ds": ds,
        "min_causal_ratio": fieldfn.min_causal,
        "residuals": {"leaf_membership": _membership(fol, worldlines)},
        "convergence_iters": 0,
    }
    return UniverseHistory(psi, theory, fol, worldlines, ds, diag)


def _membership(fol, worldlines):
    worst = 0.0
    for k, w in enumerate(worldlines):
        worst = max(worst, float(np.max(np.abs(fol.label(w.x, k) - w.s))))
    return worst


def transport(psi, fol, points, s_end, ds, *, threads=1, bounds=None):
    """Carry an ensemble ``(M, N, 4)`` on a common leaf to leaf ``s_end``.

    Members are processed in fixed chunks so the result does not depend on
    ``threads``.
    """
    points = np.asarray(points, dtype=float)
    s0 = _common_label(fol, points[0])
    jobs = [(psi, fol, points[lo:hi], s0, s_end, ds, bounds) for lo, hi in chunks(len(points))]
    return np.concatenate(chunked_map(_transport_chunk, jobs, threads), axis=0)


def _transport_chunk(psi, fol, pts, s0, s_end, ds, bounds):
    nsteps = int(round(abs(s_end - s0) / ds))
    h = ds if s_end >= s0 else -ds
    fieldfn = _LeafField(psi, fol, bounds)
    return _leaf_rk4(fieldfn, pts, s0, nsteps, h, project=not fol.constant_normal)


# -- laws (v)/(vi): waveform relaxation ----------------------------------------


class _RelaxedField:
    """Right-hand side for one worldline given the other worldlines' iterates."""

    inner_tol = 1e-10
    inner_max = 200
    damping = 0.5

    def __init__(self, psi, theory, limit):
        self.kernel = CurrentKernel(psi)
        self.theory = theory
        self.n = psi.n
        self.limit = limit
        self.frames = PerParticle(psi).normals if theory == "v" else None
        self.min_causal = np.inf
        self.inner_iters = 0

    def _current(self, k, x, normal, curves):
        y = np.empty((self.n, 4))
        off = minkowski_dot(normal, x)
        for i in range(self.n):
            y[i] = x if i == k else curves[i].cross_hyperplane(normal, off, self.limit)
        j = self.kernel.current(y, np.broadcast_to(normal, (self.n, 4)), k)
        _check_current(j)
        self.min_causal = min(self.min_causal, float(minkowski_dot(j, j) / j[0] ** 2))
        return j

    def __call__(self, k, x, curves, warm=None):
        if self.theory == "v":
            n = self.frames[k]
            j = self._current(k, x, n, curves)
            return j / minkowski_dot(n, j), None
        u = warm if warm is not None else E0
        # plain fixed-point steps while they contract, damped ones otherwise
        damping, last = 1.0, np.inf
        for it in range(self.inner_max):
            j = self._current(k, x, u, curves)
            target = _normalized(j)
            err = np.max(np.abs(target - u))
            if err < self.inner_tol:
                self.inner_iters = max(self.inner_iters, it + 1)
                return target, target
            if err > 0.5 * last:
                damping = self.damping
            last = err
            u = unit_timelike((1 - damping) * u + damping * target)
        raise NonConvergence(self.inner_max, float(np.max(np.abs(target - u))), {"stage": "tangent fixed point"})


def _solve_worldline(fieldfn, k, x0, sig0, nb, nf, ds, curves):
    n = nb + nf + 1
    xs = np.empty((n, 4))
    vs = np.empty((n, 4))
    xs[nb] = x0
    for direction, rng_ in ((1, range(nb, nb + nf)), (-1, range(nb, 0, -1))):
        h = direction * ds
        warm = None
        for j in rng_:
            x = xs[j]
            k1, warm = fieldfn(k, x, curves, warm)
            vs[j] = k1
            k2, warm = fieldfn(k, x + 0.5 * h * k1, curves, warm)
            k3, warm = fieldfn(k, x + 0.5 * h * k2, curves, warm)
            k4, warm = fieldfn(k, x + h * k3, curves, warm)
            xs[j + direction] = x + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        end = nb + nf if direction == 1 else 0
        vs[end], _ = fieldfn(k, xs[end], curves, warm)
    return Worldline(sig0 + ds * np.arange(-nb, nf + 1), xs, vs, nb)


def curve_distance(new: Worldline, old: Worldline, limit=np.inf) -> float:
    """Sup over samples of ``new`` of the distance to ``old``.

    The partner point on ``old`` is its crossing with the hyperplane through
    the sample orthogonal to ``new``'s tangent, so the measure does not depend
    on how either curve is parameterised.
    """
    if len(new) == len(old) and np.array_equal(new.s, old.s):
        return float(np.max(np.abs(new.x - old.x)))
    worst = 0.0
    for x, v in zip(new.x, new.v):
        u = unit_timelike(v) if minkowski_dot(v, v) > 0 else v / v[0]
        try:
            y = old.cross_hyperplane(u, minkowski_dot(u, x), limit)
        except CrossingNotFound:
            return np.inf
        worst = max(worst, float(np.max(np.abs(y - x))))
    return worst


def _parameter(theory, frames, k, x):
    return float(minkowski_dot(frames[k], x)) if theory == "v" else 0.0


def bootstrap_guesses(psi, initial, span, ds, pad=0.5):
    """Law-(i) worldlines (time slicing) through the initial points.

    Points that are not simultaneous are first moved to the latest time
    along their initial current; the result is only a starting guess.
    """
    pts = np.array(initial, dtype=float)
    tc = float(np.max(pts[:, 0]))
    fol = Flat(E0)
    v = _LeafField(psi, fol)(pts[None])[0]
    pts = pts + (tc - pts[:, :1]) * v
    back = tc - float(np.min(np.array(initial)[:, 0])) + 2 * span[0] + pad
    fwd = 2 * span[1] + pad
    fw = integrate(psi, fol, pts, tc + fwd, ds)
    bw = integrate(psi, fol, pts, tc - back, ds)
    out = []
    for a, b in zip(bw.worldlines, fw.worldlines):
        out.append(
            Worldline(
                np.concatenate([a.s[:-1], b.s]),
                np.concatenate([a.x[:-1], b.x]),
                np.concatenate([a.v[:-1], b.v]),
                len(a.s) - 1,
            )
        )
    return out


def integrate_relaxed(
    psi: MultiTimeWaveFunction,
    theory: str,
    guesses=None,
    *,
    initial=None,
    span=(0.2, 0.5),
    ds=1e-3,
    tol=1e-8,
    max_iter=50,
    limit=None,
    pad=0.5,
) -> UniverseHistory:
    """Waveform relaxation for laws (v) and (vi).

    Worldline ``k`` is parameterised by ``n_k . x`` (law v, ``n_k`` the
    particle's momentum direction) or by proper time from its initial point
    (law vi), over ``[-span[0], span[1]]`` around the initial point.  Each
    sweep re-solves every worldline in turn (Gauss-Seidel) against the latest
    iterates of the others; the sweep count is reported as
    ``convergence_iters``.  ``limit`` bounds how far (in parameter) a
    worldline may be continued past its ends when looking for crossings.
    """
    if theory not in RELAXED_THEORIES:
        raise ValidationError(f"integrate_relaxed handles laws v and vi, not {theory!r}")
    if initial is None:
        if guesses is None:
            raise ValidationError("need initial points or guesses")
        initial = [g.initial_point for g in guesses]
    initial = psi._check_arity(np.array(initial, dtype=float))
    if guesses is None:
        guesses = bootstrap_guesses(psi, initial, span, ds, pad)
    limit = float(span[0] + span[1] + pad) if limit is None else float(limit)
    fieldfn = _RelaxedField(psi, theory, limit)
    frames = fieldfn.frames
    nb, nf = int(round(span[0] / ds)), int(round(span[1] / ds))
    curves = list(guesses)
    changes = []
    for it in range(1, max_iter + 1):
        change = 0.0
        for k in range(psi.n):
            sig0 = _parameter(theory, frames, k, initial[k])
            new = _solve_worldline(fieldfn, k, initial[k], sig0, nb, nf, ds, curves)
            change = max(change, curve_distance(new, curves[k], limit))
            curves[k] = new
        changes.append(change)
        if change < tol:
            break
    else:
        raise NonConvergence(max_iter, changes[-1], {"theory": theory, "changes": changes})
    fol = PerParticle(psi) if theory == "v" else None
    diag = {
        "theory": theory,
        "steps": nb + nf,
        "ds": ds,
        "span": list(span),
        "limit": limit,
        "convergence_iters": it,
        "changes": changes,
        "min_causal_ratio": fieldfn.min_causal,
        "inner_iters": fieldfn.inner_iters,
        "residuals": {"guidance": relaxed_guidance_residual(psi, theory, curves, limit)},
    }
    return UniverseHistory(psi, theory, fol, curves, ds, diag)


def relaxed_guidance_residual(psi, theory, worldlines, limit=np.inf) -> float:
    """Max ``|v_j - rhs(x_j)|`` over all samples with all worldlines final.

    For law (vi) this is the tangency residual: the stored tangent against the
    normalized current on the hyperplane orthogonal to it.
    """
    fieldfn = _RelaxedField(psi, theory, limit)
    worst = 0.0
    for k, w in enumerate(worldlines):
        for x, v in zip(w.x, w.v):
            if theory == "v":
                rhs, _ = fieldfn(k, x, worldlines)
            else:
                u = _normalized(v)
                rhs = _normalized(fieldfn._current(k, x, u, worldlines))
            worst = max(worst, float(np.max(np.abs(rhs - v))))
    return worst


# -- quantum equilibrium -------------------------------------------------------


def equilibrium_density(psi, leaf: Leaf, config):
    """``J^{mu_1..mu_N} n_{mu_1}..n_{mu_N}`` with the leaf's unit normals.

    Broadcasts over leading axes of ``config`` (``(..., N, 4)``).
    """
    pts = np.asarray(config.points if isinstance(config, LeafConfiguration) else config, dtype=float)
    fol = leaf.foliation
    normals = np.stack([fol.normal(pts[..., i, :], i) for i in range(psi.n)], axis=-2)
    return CurrentKernel(psi).density(pts, normals)


def lift_to_leaf(leaf: Leaf, spatial, k=None, tol=1e-13, max_iter=50):
    """Points on ``leaf`` above spatial positions ``(..., 3)`` (time solved for)."""
    sp = np.asarray(spatial, dtype=float)
    kk = leaf.k if k is None else k
    fol = leaf.foliation
    x = np.concatenate([np.full(sp.shape[:-1] + (1,), leaf.value), sp], axis=-1)
    if isinstance(fol, (Flat, PerParticle)):
        n = fol.normal_of(kk)
        x[..., 0] = (leaf.value + sp @ n[1:]) / n[0]
        return x
    for _ in range(max_iter):
        r = fol.label(x, kk) - leaf.value
        g0 = fol.label_gradient(x, kk)[..., 0]
        dt = r / g0
        x[..., 0] -= dt
        if np.max(np.abs(dt)) < tol:
            return x
    raise NonConvergence(max_iter, float(np.max(np.abs(dt))), {"stage": "lift to leaf"})


def coordinate_density(psi, leaf: Leaf, points, kernel=None):
    """Crossing density per unit lab-coordinate volume ``d^3x_1 .. d^3x_N``.

    Each slot is contracted with ``d label / d_0 label`` instead of the unit
    normal, which converts the leaf's volume element to coordinate volume.
    """
    kernel = CurrentKernel(psi) if kernel is None else kernel
    fol = leaf.foliation
    cov = np.stack(
        [fol.label_gradient(points[..., i, :], i) for i in range(psi.n)], axis=-2
    )
    cov = cov / cov[..., :1]
    return kernel.density(points, lower(cov))


@dataclass(eq=False)
class EquilibriumSample:
    leaf: Leaf
    points: np.ndarray
    envelope: float
    acceptance: float
    rescans: int

    def configurations(self):
        return [LeafConfiguration(self.leaf, p) for p in self.points]


class _EnvelopeExceeded(Exception):
    def __init__(self, value):
        super().__init__(value)
        self.value = value


def _box_array(box, n):
    b = np.asarray(box, dtype=float)
    b = np.broadcast_to(b, (n, 3, 2)).copy()
    if np.any(b[..., 1] < b[..., 0]):
        raise ValidationError("box upper bounds must not be below lower bounds")
    return b


def _scan_max(psi, leaf, box, points_total):
    active = [(i, a) for i in range(psi.n) for a in range(3) if box[i, a, 1] > box[i, a, 0]]
    per = max(3, int(points_total ** (1.0 / max(1, len(active)))))
    axes = [np.linspace(box[i, a, 0], box[i, a, 1], per) for i, a in active]
    mesh = np.meshgrid(*axes, indexing="ij") if axes else []
    m = mesh[0].size if axes else 1
    sp = np.broadcast_to(box[..., 0], (m, psi.n, 3)).copy()
    for (i, a), grid in zip(active, mesh):
        sp[:, i, a] = grid.ravel()
    pts = np.stack([lift_to_leaf(leaf, sp[:, i], i) for i in range(psi.n)], axis=1)
    return float(np.max(coordinate_density(psi, leaf, pts)))


def _sample_chunk(psi, leaf, box, envelope, seed, lo, hi, block):
    kernel = CurrentKernel(psi)
    n = psi.n
    out = np.empty((hi - lo, n, 4))
    width = box[..., 1] - box[..., 0]
    tried = accepted = 0
    pending = list(range(lo, hi))
    rngs = {m: member_rng(seed, m) for m in pending}
    while pending:
        draws = np.array([rngs[m].random((block, n, 4)) for m in pending])
        sp = box[..., 0] + draws[..., :3] * width
        pts = np.stack([lift_to_leaf(leaf, sp[..., i, :], i) for i in range(n)], axis=-2)
        rho = coordinate_density(psi, leaf, pts, kernel)
        if np.any(rho > envelope):
            raise _EnvelopeExceeded(float(np.max(rho)))
        ok = draws[..., 0, 3] * envelope < rho
        still = []
        for row, m in enumerate(pending):
            hit = np.nonzero(ok[row])[0]
            if hit.size:
                out[m - lo] = pts[row, hit[0]]
                tried += hit[0] + 1
                accepted += 1
            else:
                tried += block
                still.append(m)
        pending = still
    return out, tried, accepted


def sample_equilibrium(psi, leaf: Leaf, box, count: int, seed: int, *, threads=1, scan_points=20000, block=32):
    """Rejection sampling of crossing configurations on ``leaf``.

    Proposals are uniform in the spatial ``box`` (per particle ``3 x 2``
    bounds; equal bounds pin a coordinate) lifted onto the leaf; the target
    is :func:`coordinate_density`.  The envelope is 1.1 times the maximum
    found on a grid scan.  If a proposal ever exceeds it, the grid is
    rescanned at higher resolution once and sampling restarts; a second
    violation raises :class:`EnvelopeTooSmall`.
    """
    box = _box_array(box, psi.n)
    peak = _scan_max(psi, leaf, box, scan_points)
    rescans = 0
    while True:
        envelope = 1.1 * peak
        jobs = [(psi, leaf, box, envelope, seed, lo, hi, block) for lo, hi in chunks(count)]
        try:
            parts = chunked_map(_sample_chunk, jobs, threads)
            break
        except _EnvelopeExceeded as exc:
            if rescans:
                raise EnvelopeTooSmall(
                    f"density {exc.value:.4g} exceeds the envelope {envelope:.4g} after a rescan"
                ) from None
            rescans += 1
            peak = max(_scan_max(psi, leaf, box, scan_points * 8), exc.value)
    points = np.concatenate([p[0] for p in parts], axis=0)
    tried = sum(p[1] for p in parts)
    accepted = sum(p[2] for p in parts)
    return EquilibriumSample(leaf, points, envelope, accepted / max(tried, 1), rescans)


# -- step-size sweep -------------------------------------------------------------


@dataclass
class ConvergenceSweep:
    steps: np.ndarray
    errors: np.ndarray
    slope: float


def convergence_sweep(psi, fol, initial, s_end, steps, reference_step, theory="i") -> ConvergenceSweep:
    """Endpoint error against a fine reference run and its log-log slope."""
    ref = integrate(psi, fol, initial, s_end, reference_step, theory=theory)
    end = np.array([w.x[-1] for w in ref.worldlines])
    errs = []
    for h in steps:
        run = integrate(psi, fol, initial, s_end, h, theory=theory)
        errs.append(float(np.max(np.abs(np.array([w.x[-1] for w in run.worldlines]) - end))))
    steps, errs = np.asarray(steps, dtype=float), np.asarray(errs)
    slope = float(np.polyfit(np.log(steps), np.log(errs), 1)[0])
    return ConvergenceSweep(steps, errs, slope)
