"""Non-relativistic Bohmian mechanics for free particles (hbar = 1).

Wave functions are finite superpositions of products of free Gaussian
packets.  A packet with width ``sigma`` evolves in closed form through the
complex width parameter ``alpha_t = a / (1 + 2 i a t / m)``, ``a = 1/(4 sigma^2)``.
``sigma = inf`` gives a plane wave ``exp(i p.x - i p^2 t / 2m)``, which is what
the relativistic comparison uses.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dirac import CurrentKernel, MultiTimeWaveFunction
from .errors import EnvelopeTooSmall, MismatchedModeSets, NodeEncountered, NonPositiveMass, ValidationError
from .parallel import chunked_map, chunks, member_rng

NODE = 1e-14


@dataclass(frozen=True)
class GaussianPacket:
    mass: float
    center: tuple
    momentum: tuple
    width: float = np.inf

    def __post_init__(self):
        if not self.mass > 0:
            raise NonPositiveMass(f"mass must be positive, got {self.mass}")
        if not self.width > 0:
            raise ValidationError("packet width must be positive")
        object.__setattr__(self, "center", tuple(float(c) for c in np.reshape(self.center, 3)))
        object.__setattr__(self, "momentum", tuple(float(c) for c in np.reshape(self.momentum, 3)))

    @property
    def is_plane_wave(self):
        return not np.isfinite(self.width)

    def alpha(self, t):
        if self.is_plane_wave:
            return 0.0j
        a = 1.0 / (4.0 * self.width**2)
        return a / (1.0 + 2j * a * t / self.mass)

    def width_at(self, t):
        return self.width * np.sqrt(1.0 + (t / (2.0 * self.mass * self.width**2)) ** 2)

    def mean(self, t):
        return np.array(self.center) + np.array(self.momentum) * t / self.mass

    def value_and_log_gradient(self, x, t):
        """``g(x, t)`` and ``grad g / g`` for positions ``x`` of shape (..., 3)."""
        x = np.asarray(x, dtype=float)
        p = np.array(self.momentum)
        r = x - self.mean(t)
        phase = (x - np.array(self.center)) @ p - p @ p * t / (2 * self.mass)
        if self.is_plane_wave:
            val = np.exp(1j * phase)
            return val, np.broadcast_to(1j * p, x.shape).astype(complex)
        a = 1.0 / (4.0 * self.width**2)
        al = self.alpha(t)
        pref = (2 * a / np.pi) ** 0.75 * (al / a) ** 1.5
        val = pref * np.exp(-al * np.sum(r * r, axis=-1) + 1j * phase)
        return val, -2 * al * r + 1j * p

    def shifted(self, velocity):
        """The packet for a frame moving with ``-velocity`` (momentum ``+ m v``)."""
        return GaussianPacket(self.mass, self.center, np.array(self.momentum) + self.mass * np.asarray(velocity), self.width)

    def trajectory(self, x0, t):
        """Closed-form Bohmian trajectory of a single packet from ``x0`` at t = 0."""
        x0 = np.asarray(x0, dtype=float)
        if self.is_plane_wave:
            return x0 + np.array(self.momentum) * t / self.mass
        return self.mean(t) + (x0 - np.array(self.center)) * self.width_at(t) / self.width


class NRWaveFunction:
    """``psi(x_1..x_N, t) = sum_a c_a prod_k g_{a,k}(x_k, t)``."""

    def __init__(self, terms):
        terms = [(complex(c), tuple(pk)) for c, pk in terms]
        if not terms:
            raise ValidationError("a wave function needs at least one term")
        n = len(terms[0][1])
        for _, pk in terms:
            if len(pk) != n:
                raise ValidationError("all terms need the same particle count")
        self.terms = terms
        self.n = n
        self.masses = tuple(p.mass for p in terms[0][1])

    def tensor(self, other):
        return NRWaveFunction([(c1 * c2, a + b) for c1, a in self.terms for c2, b in other.terms])

    def _parts(self, xs, t):
        xs = np.asarray(xs, dtype=float)
        if xs.shape[-2:] != (self.n, 3):
            raise ValidationError(f"positions must have shape (..., {self.n}, 3)")
        amps, grads = [], []
        for c, packets in self.terms:
            vals, lg = zip(*(g.value_and_log_gradient(xs[..., k, :], t) for k, g in enumerate(packets)))
            amp = c * np.prod(np.stack(vals, axis=-1), axis=-1)
            amps.append(amp)
            grads.append(np.stack(lg, axis=-2) * amp[..., None, None])
        return np.sum(amps, axis=0), np.sum(grads, axis=0)

    def evaluate(self, xs, t):
        return self._parts(xs, t)[0]

    def to_dict(self):
        return {
            "terms": [
                {
                    "coefficient": [c.real, c.imag],
                    "packets": [
                        {"mass": g.mass, "center": list(g.center), "p": list(g.momentum), "width": None if g.is_plane_wave else g.width}
                        for g in pk
                    ],
                }
                for c, pk in self.terms
            ]
        }

    @classmethod
    def from_dict(cls, d):
        terms = []
        for t in d["terms"]:
            re, im = t["coefficient"]
            pk = [
                GaussianPacket(g["mass"], g["center"], g["p"], np.inf if g.get("width") is None else g["width"])
                for g in t["packets"]
            ]
            terms.append((complex(re, im), pk))
        return cls(terms)


def nr_velocity(psi: NRWaveFunction, t, positions):
    """``v_k = Im(grad_k psi / psi) / m_k`` for positions of shape (..., N, 3)."""
    val, grad = psi._parts(positions, t)
    if np.any(np.abs(val) < NODE):
        raise NodeEncountered("wave function vanishes at the configuration")
    m = np.array(psi.masses)[:, None]
    return (grad / val[..., None, None]).imag / m


def schrodinger_residual(psi: NRWaveFunction, positions, t, h=1e-4) -> float:
    """``|i d_t psi + sum_k lap_k psi / 2 m_k|`` by central differences."""
    xs = np.asarray(positions, dtype=float)
    dt = (psi.evaluate(xs, t + h) - psi.evaluate(xs, t - h)) / (2 * h)
    lap = 0.0
    c = psi.evaluate(xs, t)
    for k in range(psi.n):
        for a in range(3):
            e = np.zeros_like(xs)
            e[..., k, a] = h
            lap = lap + (psi.evaluate(xs + e, t) - 2 * c + psi.evaluate(xs - e, t)) / (h * h) / (2 * psi.masses[k])
    scale = max(1.0, float(np.max(np.abs(c))))
    return float(np.max(np.abs(1j * dt + lap))) / scale


@dataclass(eq=False)
class NRHistory:
    psi: NRWaveFunction
    t: np.ndarray
    x: np.ndarray  # (steps+1, N, 3)
    dt: float
    diagnostics: dict = field(default_factory=dict)


def _rk4(psi, x, t0, nsteps, dt, record):
    xs = [x] if record else None
    t = t0
    for _ in range(nsteps):
        k1 = nr_velocity(psi, t, x)
        k2 = nr_velocity(psi, t + dt / 2, x + dt / 2 * k1)
        k3 = nr_velocity(psi, t + dt / 2, x + dt / 2 * k2)
        k4 = nr_velocity(psi, t + dt, x + dt * k3)
        x = x + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        t += dt
        if record:
            xs.append(x)
    return np.array(xs) if record else x


def nr_integrate(psi: NRWaveFunction, x0, t0, t1, dt) -> NRHistory:
    """Fixed-step RK4 for one configuration ``x0`` (shape (N, 3))."""
    x0 = np.asarray(x0, dtype=float)
    nsteps = int(round(abs(t1 - t0) / dt))
    h = dt if t1 >= t0 else -dt
    xs = _rk4(psi, x0, t0, nsteps, h, True)
    return NRHistory(psi, t0 + h * np.arange(nsteps + 1), xs, dt, {"steps": nsteps})


def nr_transport(psi, x0, t0, t1, dt, *, threads=1):
    """Carry an ensemble ``(M, N, 3)`` from ``t0`` to ``t1``."""
    x0 = np.asarray(x0, dtype=float)
    jobs = [(psi, x0[lo:hi], t0, t1, dt) for lo, hi in chunks(len(x0))]
    return np.concatenate(chunked_map(_transport_chunk, jobs, threads), axis=0)


def _transport_chunk(psi, x0, t0, t1, dt):
    nsteps = int(round(abs(t1 - t0) / dt))
    return _rk4(psi, x0, t0, nsteps, dt if t1 >= t0 else -dt, False)


def boost_wavefunction_nr(psi: NRWaveFunction, velocity, particles=None) -> NRWaveFunction:
    """Galilean boost of the listed particles (all by default).

    ``psi'(x, t) = exp(i sum_k m_k (v.x_k - v^2 t / 2)) psi(x - v t, t)``; for
    packets this shifts each momentum by ``m v`` and multiplies the term by
    ``exp(i sum_k m_k v.x0_k)``.
    """
    v = np.asarray(velocity, dtype=float)
    sel = range(psi.n) if particles is None else particles
    terms = []
    for c, packets in psi.terms:
        phase = sum(g.mass * v @ np.array(g.center) for k, g in enumerate(packets) if k in sel)
        new = tuple(g.shifted(v) if k in sel else g for k, g in enumerate(packets))
        terms.append((c * np.exp(1j * phase), new))
    return NRWaveFunction(terms)


def galilean_boost(history: NRHistory, velocity, particles=None) -> NRHistory:
    """Boost a history: ``X_k -> X_k + v t`` and the matching wave-function phase."""
    v = np.asarray(velocity, dtype=float)
    sel = list(range(history.psi.n)) if particles is None else list(particles)
    x = history.x.copy()
    x[:, sel, :] += history.t[:, None, None] * v
    psi = boost_wavefunction_nr(history.psi, v, sel)
    return NRHistory(psi, history.t.copy(), x, history.dt, dict(history.diagnostics))


def nr_is_solution(history: NRHistory, tol=1e-8, schrodinger_tol=1e-6):
    """Re-integrate from the first sample and compare; also check the wave equation."""
    re = nr_integrate(history.psi, history.x[0], history.t[0], history.t[-1], history.dt)
    dev = float(np.max(np.abs(re.x - history.x)))
    picks = range(0, len(history.t), max(1, len(history.t) // 5))
    res = max(schrodinger_residual(history.psi, history.x[i], history.t[i]) for i in picks)
    return dev < tol and res < schrodinger_tol, {"trajectory_deviation": dev, "schrodinger_residual": res}


def matched_nr(psi: MultiTimeWaveFunction) -> NRWaveFunction:
    """Plane-wave NR counterpart: same coefficients and momenta, spin dropped."""
    return NRWaveFunction(
        [(c, [GaussianPacket(md.mass, (0, 0, 0), md.momentum3) for md in modes]) for c, modes in psi.terms]
    )


def _check_matched(rel: MultiTimeWaveFunction, nr: NRWaveFunction):
    if rel.n != nr.n or len(rel.terms) != len(nr.terms):
        raise MismatchedModeSets("term or particle counts differ")
    for (c1, modes), (c2, packets) in zip(rel.terms, nr.terms):
        if abs(c1 - c2) > 1e-12:
            raise MismatchedModeSets("coefficients differ")
        for md, g in zip(modes, packets):
            if not g.is_plane_wave or abs(md.mass - g.mass) > 1e-12 or np.max(np.abs(md.momentum3 - np.array(g.momentum))) > 1e-12:
                raise MismatchedModeSets("modes differ in mass or momentum or are not plane waves")


def relativistic_velocity(psi: MultiTimeWaveFunction, t, positions):
    """``dX/dt`` on the time slice ``t`` (all slots contracted with (1, 0, 0, 0))."""
    sp = np.asarray(positions, dtype=float)
    pts = np.concatenate([np.full(sp.shape[:-1] + (1,), float(t)), sp], axis=-1)
    e0 = np.broadcast_to(np.array([1.0, 0, 0, 0]), pts.shape)
    j = CurrentKernel(psi).currents(pts, e0)
    return j[..., 1:] / j[..., :1]


def nonrel_limit_compare(rel: MultiTimeWaveFunction, nr: NRWaveFunction, configs, t=0.0):
    """Velocity discrepancy between the two theories on the same configurations.

    Returns ``{"absolute": max |v_rel - v_nr|, "relative": absolute / v_scale,
    "speed_scale": v_scale}`` with ``v_scale = max_mode |p| / m``.  The
    absolute figure is third order in ``|p|/m`` (it is a velocity); the
    relative one is second order.
    """
    _check_matched(rel, nr)
    configs = np.asarray(configs, dtype=float)
    v_rel = relativistic_velocity(rel, t, configs)
    v_nr = nr_velocity(nr, t, configs)
    absolute = float(np.max(np.abs(v_rel - v_nr)))
    scale = float(max(np.linalg.norm(md.momentum3) / md.mass for _, modes in rel.terms for md in modes))
    return {
        "absolute": absolute,
        "relative": absolute / scale if scale > 0 else 0.0,
        "speed_scale": scale,
    }


def sample_born(psi: NRWaveFunction, t, box, count, seed, *, threads=1, scan_points=20000, block=32):
    """Rejection sampling of ``|psi_t|^2`` inside a per-particle box (N, 3, 2)."""
    box = np.broadcast_to(np.asarray(box, dtype=float), (psi.n, 3, 2)).copy()
    active = [(i, a) for i in range(psi.n) for a in range(3) if box[i, a, 1] > box[i, a, 0]]
    per = max(3, int(scan_points ** (1.0 / max(1, len(active)))))
    mesh = np.meshgrid(*[np.linspace(box[i, a, 0], box[i, a, 1], per) for i, a in active], indexing="ij")
    sp = np.broadcast_to(box[..., 0], (mesh[0].size, psi.n, 3)).copy()
    for (i, a), g in zip(active, mesh):
        sp[:, i, a] = g.ravel()
    envelope = 1.1 * float(np.max(np.abs(psi.evaluate(sp, t)) ** 2))
    jobs = [(psi, t, box, envelope, seed, lo, hi, block) for lo, hi in chunks(count)]
    return np.concatenate(chunked_map(_born_chunk, jobs, threads), axis=0)


def _born_chunk(psi, t, box, envelope, seed, lo, hi, block):
    out = np.empty((hi - lo, psi.n, 3))
    width = box[..., 1] - box[..., 0]
    for m in range(lo, hi):
        rng = member_rng(seed, m)
        while True:
            d = rng.random((block, psi.n, 4))
            sp = box[..., 0] + d[..., :3] * width
            rho = np.abs(psi.evaluate(sp, t)) ** 2
            if np.any(rho > envelope):
                raise EnvelopeTooSmall("density exceeds the scanned envelope")
            hit = np.nonzero(d[:, 0, 3] * envelope < rho)[0]
            if hit.size:
                out[m - lo] = sp[hit[0]]
                break
    return out


def limit_probe(ratio, amplitude=0.1, mass=1.0, count=64):
    """Velocity discrepancy for two counter-propagating modes ``+-ratio*mass`` along x.

    Spin points along x so that the spin term of the Dirac current does not
    cancel; configurations cover one fringe period ``2 pi / |dp|``.
    """
    from .dirac import make_spinor

    chi = np.array([1.0, 1.0], dtype=complex) / np.sqrt(2.0)
    p = ratio * mass
    rel = MultiTimeWaveFunction(
        [(1.0, (make_spinor([p, 0, 0], mass, chi),)), (amplitude, (make_spinor([-p, 0, 0], mass, chi),))]
    )
    configs = np.zeros((count, 1, 3))
    configs[:, 0, 0] = np.linspace(0, 2 * np.pi, count, endpoint=False) / (2 * p)
    return nonrel_limit_compare(rel, matched_nr(rel), configs)
