"""Exact multi-time wave functions of N free Dirac particles.

A wave function is a finite superposition of N-fold tensor products of
positive-energy plane waves, so the N Dirac equations hold exactly and every
current or tensor below has a closed form.  Spinors are normalized to
``ubar u = 2m`` (hence ``u^dagger u = 2 p^0``).

Plane waves are not normalizable, so the hypersurface integrals that define
energy-momentum are replaced by mode sums (cross terms between distinct
momenta vanish distributionally).  The mode-sum weight of a term depends on
the hyperplane the integral is taken over; ``frame=None`` evaluates it on the
hyperplane orthogonal to the result itself (a self-consistent rest frame),
which keeps the map from wave functions to momenta Lorentz covariant.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from itertools import product as iproduct

import numpy as np

from .errors import ArityMismatch, DegenerateMomenta, NonPositiveMass, ValidationError
from .minkowski import (
    ALPHA,
    PAULI,
    LorentzTransform,
    apply,
    check_unit_timelike,
    lower,
    minkowski_dot,
    spinor_rep_of,
    unit_timelike,
)

_LETTERS = "abcdefghij"
SPIN_STATES = {"+": np.array([1.0, 0.0], dtype=complex), "-": np.array([0.0, 1.0], dtype=complex)}


@dataclass(frozen=True, eq=False)
class PlaneWaveMode:
    """Positive-energy plane wave ``u(p) exp(-i p.x)``.

    ``chi`` is the two-component rest-frame spin state; the four-spinor is
    derived from it and never stored independently.
    """

    mass: float
    momentum3: np.ndarray
    chi: np.ndarray

    def __post_init__(self):
        if not self.mass > 0:
            raise NonPositiveMass(f"mass must be positive, got {self.mass}")
        p = np.array(self.momentum3, dtype=float).reshape(3)
        chi = np.array(self.chi, dtype=complex).reshape(2)
        norm = np.linalg.norm(chi)
        if norm == 0:
            raise ValidationError("spin state must be nonzero")
        chi = chi / norm
        p.setflags(write=False)
        chi.setflags(write=False)
        object.__setattr__(self, "mass", float(self.mass))
        object.__setattr__(self, "momentum3", p)
        object.__setattr__(self, "chi", chi)

    @property
    def energy(self) -> float:
        return float(np.sqrt(self.mass**2 + self.momentum3 @ self.momentum3))

    @cached_property
    def four_momentum(self) -> np.ndarray:
        return np.concatenate([[self.energy], self.momentum3])

    @cached_property
    def spinor(self) -> np.ndarray:
        e, m = self.energy, self.mass
        sp = np.tensordot(self.momentum3, PAULI, axes=(0, 0))
        return np.concatenate([np.sqrt(e + m) * self.chi, sp @ self.chi / np.sqrt(e + m)])

    def same_as(self, other: "PlaneWaveMode", tol=1e-12) -> bool:
        return (
            abs(self.mass - other.mass) <= tol
            and np.max(np.abs(self.momentum3 - other.momentum3)) <= tol
            and np.max(np.abs(self.chi - other.chi)) <= tol
        )

    def to_dict(self):
        for label, state in SPIN_STATES.items():
            if np.allclose(self.chi, state, atol=1e-14):
                return {"mass": self.mass, "p": self.momentum3.tolist(), "spin": label}
        return {
            "mass": self.mass,
            "p": self.momentum3.tolist(),
            "chi": [[z.real, z.imag] for z in self.chi],
        }

    @classmethod
    def from_dict(cls, d):
        if "chi" in d:
            chi = [complex(re, im) for re, im in d["chi"]]
        else:
            chi = SPIN_STATES[d.get("spin", "+")]
        return cls(d["mass"], d["p"], chi)


def make_spinor(p, m, spin="+") -> PlaneWaveMode:
    """Plane-wave mode with momentum ``p``, mass ``m`` and spin ``'+'``/``'-'`` along z.

    ``spin`` may also be an explicit two-component rest-frame spin state.
    """
    chi = SPIN_STATES[spin] if isinstance(spin, str) else spin
    return PlaneWaveMode(m, p, chi)


def dirac_operator_residual(mode: PlaneWaveMode) -> float:
    """``||(gamma^mu p_mu - m) u||`` for a mode."""
    from .minkowski import slash

    u = mode.spinor
    return float(np.linalg.norm((slash(mode.four_momentum) - mode.mass * np.eye(4)) @ u))


class MultiTimeWaveFunction:
    """``psi(x_1, ..., x_N) = sum_a c_a (x)_k u_{a,k} exp(-i p_{a,k}.x_k)``."""

    def __init__(self, terms):
        terms = [(complex(c), tuple(modes)) for c, modes in terms]
        if not terms:
            raise ValidationError("a wave function needs at least one term")
        n = len(terms[0][1])
        if n == 0:
            raise ValidationError("a wave function needs at least one particle")
        masses = tuple(m.mass for m in terms[0][1])
        for _, modes in terms:
            if len(modes) != n:
                raise ArityMismatch("all terms must have the same particle count")
            if any(abs(md.mass - mk) > 1e-12 for md, mk in zip(modes, masses)):
                raise ValidationError("slot masses differ between terms")
        self.terms = tuple(terms)
        self.n = n
        self.masses = masses
        self._coeffs = np.array([c for c, _ in terms], dtype=complex)
        self._p = np.array([[md.four_momentum for md in modes] for _, modes in terms])
        self._p_lower = lower(self._p)
        self._u = np.array([[md.spinor for md in modes] for _, modes in terms])
        flat = []
        for _, modes in terms:
            t = np.ones(1, dtype=complex)
            for md in modes:
                t = np.kron(t, md.spinor)
            flat.append(t)
        self._u_flat = np.array(flat)

    def __len__(self):
        return len(self.terms)

    def __repr__(self):
        return f"MultiTimeWaveFunction(N={self.n}, terms={len(self.terms)})"

    @property
    def coefficients(self):
        return self._coeffs.copy()

    @property
    def momenta(self):
        """Array of four-momenta, shape ``(terms, N, 4)``."""
        return self._p.copy()

    def modes(self, k):
        return [modes[k] for _, modes in self.terms]

    def momenta_distinct(self, tol=1e-12) -> bool:
        a = self._p.reshape(len(self.terms), -1)
        for i in range(len(a)):
            for j in range(i + 1, len(a)):
                if np.max(np.abs(a[i] - a[j])) <= tol:
                    return False
        return True

    def require_distinct(self):
        if not self.momenta_distinct():
            raise DegenerateMomenta("two terms share the same momentum tuple")

    # -- construction helpers -------------------------------------------------
    def tensor(self, other: "MultiTimeWaveFunction") -> "MultiTimeWaveFunction":
        """The product ``self (x) other`` (other's particles appended)."""
        return MultiTimeWaveFunction(
            [(c1 * c2, m1 + m2) for c1, m1 in self.terms for c2, m2 in other.terms]
        )

    def scaled(self, factor) -> "MultiTimeWaveFunction":
        return MultiTimeWaveFunction([(c * factor, m) for c, m in self.terms])

    def to_dict(self):
        return {
            "terms": [
                {"coefficient": [c.real, c.imag], "modes": [md.to_dict() for md in modes]}
                for c, modes in self.terms
            ]
        }

    @classmethod
    def from_dict(cls, d):
        terms = []
        for t in d["terms"]:
            re, im = t["coefficient"]
            terms.append((complex(re, im), [PlaneWaveMode.from_dict(md) for md in t["modes"]]))
        return cls(terms)

    # -- evaluation -----------------------------------------------------------
    def _check_arity(self, xs):
        xs = np.asarray(xs, dtype=float)
        if xs.ndim < 2 or xs.shape[-2] != self.n or xs.shape[-1] != 4:
            raise ArityMismatch(f"expected configurations of shape (..., {self.n}, 4), got {xs.shape}")
        return xs

    def evaluate_flat(self, xs):
        xs = self._check_arity(xs)
        arg = np.einsum("...km,akm->...a", xs, self._p_lower)
        return (np.exp(-1j * arg) * self._coeffs) @ self._u_flat

    def evaluate(self, xs):
        xs = self._check_arity(xs)
        return self.evaluate_flat(xs).reshape(xs.shape[:-2] + (4,) * self.n)


def evaluate(psi: MultiTimeWaveFunction, xs):
    """Spin tensor ``psi(x_1..x_N)`` of shape ``(..., 4, ..., 4)``."""
    return psi.evaluate(xs)


def _apply_slot(op, psi_t, slot, n):
    idx = _LETTERS[:n]
    out = idx.replace(idx[slot], "z")
    return np.einsum(f"...z{idx[slot]},...{idx}->...{out}", op, psi_t)


def _normal_ops(normals):
    # gamma^0 nslash for each normal: (..., 4, 4)
    return np.einsum("...m,mab->...ab", lower(normals), ALPHA)


def current_tensor(psi: MultiTimeWaveFunction, xs, return_residue=False):
    """``J^{mu_1..mu_N} = psibar gamma_1^{mu_1} ... gamma_N^{mu_N} psi``, shape ``(..., 4, .., 4)``.

    With ``return_residue=True`` also returns the largest imaginary part of
    the sesquilinear form, which must vanish.
    """
    val = psi.evaluate(xs)
    n = psi.n
    bra = "".join(chr(ord("A") + i) for i in range(n))
    ket = _LETTERS[:n]
    mus = "mnopqr"[:n]
    ops = ",".join(f"{mus[i]}{bra[i]}{ket[i]}" for i in range(n))
    j = np.einsum(f"...{bra},{ops},...{ket}->...{mus}", np.conj(val), *([ALPHA] * n), val, optimize=True)
    if return_residue:
        return j.real, float(np.max(np.abs(j.imag)))
    return j.real


def guidance_current(psi: MultiTimeWaveFunction, xs, normals, k, *, values=None, check=True):
    """Surface-contracted current of particle ``k``.

    ``J^{mu_1..mu_N}`` contracted with ``n_{mu_i}(x_i)`` for every ``i != k``.
    Broadcasts over leading axes of ``xs`` / ``normals`` (shape ``(..., N, 4)``).
    ``values`` may carry a precomputed ``psi.evaluate(xs)``.
    """
    xs = psi._check_arity(xs)
    normals = np.asarray(normals, dtype=float)
    if normals.shape[-2:] != (psi.n, 4):
        raise ArityMismatch("normals must have shape (..., N, 4)")
    if check:
        check_unit_timelike(normals, tol=1e-8)
    val = psi.evaluate(xs) if values is None else values
    n = psi.n
    ops = _normal_ops(normals)
    phi = val
    for i in range(n):
        if i != k:
            phi = _apply_slot(ops[..., i, :, :], phi, i, n)
    idx = _LETTERS[:n]
    out = idx.replace(idx[k], "z")
    j = np.einsum(f"...{idx},m{idx[k]}z,...{out}->...m", np.conj(val), ALPHA, phi)
    return j.real


def contracted_density(psi: MultiTimeWaveFunction, xs, covectors, *, values=None):
    """``J^{mu_1..mu_N} a_{mu_1}(x_1) ... a_{mu_N}(x_N)`` for contravariant ``a``.

    With unit normals this is the equilibrium density relative to the induced
    volume of the leaf.
    """
    xs = psi._check_arity(xs)
    val = psi.evaluate(xs) if values is None else values
    ops = _normal_ops(np.asarray(covectors, dtype=float))
    n = psi.n
    phi = val
    for i in range(n):
        phi = _apply_slot(ops[..., i, :, :], phi, i, n)
    idx = _LETTERS[:n]
    return np.einsum(f"...{idx},...{idx}->...", np.conj(val), phi).real


class CurrentKernel:
    """Mode-pair form of the surface-contracted currents, for repeated queries.

    With ``K_i[a, b]^mu = u_{a,i}^dagger gamma^0 gamma^mu u_{b,i}`` and term
    amplitudes ``A_a = c_a exp(-i sum_i p_{a,i}.x_i)``,

    ``J_k^mu = Re sum_{a,b} conj(A_a) A_b K_k[a,b]^mu prod_{i != k} K_i[a,b].n_i``.

    Cost is ``O(terms^2 N)`` per configuration and independent of the
    ``4^N`` spin-tensor size.  Agrees with :func:`guidance_current`.
    """

    def __init__(self, psi: MultiTimeWaveFunction):
        self.psi = psi
        u = psi._u  # (T, N, 4)
        self.k_lower = lower(np.einsum("ain,mnr,bir->iabm", np.conj(u), ALPHA, u))
        self.k_upper = np.einsum("ain,mnr,bir->iabm", np.conj(u), ALPHA, u)

    def _amplitudes(self, xs):
        arg = np.einsum("...km,akm->...a", xs, self.psi._p_lower)
        return np.exp(-1j * arg) * self.psi._coeffs

    def _slot_factors(self, normals):
        # (..., N, T, T): K_i[a,b] . n_i
        return np.einsum("...im,iabm->...iab", normals, self.k_lower)

    def currents(self, xs, normals):
        """All ``J_k`` at once, shape ``(..., N, 4)``."""
        xs = np.asarray(xs, dtype=float)
        normals = np.asarray(normals, dtype=float)
        amp = self._amplitudes(xs)
        pair = np.conj(amp)[..., :, None] * amp[..., None, :]
        f = self._slot_factors(normals)
        n = self.psi.n
        out = np.empty(xs.shape[:-2] + (n, 4))
        for k in range(n):
            w = pair
            for i in range(n):
                if i != k:
                    w = w * f[..., i, :, :]
            out[..., k, :] = np.einsum("...ab,abm->...m", w, self.k_upper[k]).real
        return out

    def current(self, xs, normals, k):
        xs = np.asarray(xs, dtype=float)
        normals = np.asarray(normals, dtype=float)
        amp = self._amplitudes(xs)
        w = np.conj(amp)[..., :, None] * amp[..., None, :]
        f = self._slot_factors(normals)
        for i in range(self.psi.n):
            if i != k:
                w = w * f[..., i, :, :]
        return np.einsum("...ab,abm->...m", w, self.k_upper[k]).real

    def density(self, xs, normals):
        """``J^{mu_1..mu_N} n_{mu_1}(x_1)...n_{mu_N}(x_N)``."""
        xs = np.asarray(xs, dtype=float)
        amp = self._amplitudes(xs)
        w = np.conj(amp)[..., :, None] * amp[..., None, :]
        f = self._slot_factors(np.asarray(normals, dtype=float))
        for i in range(self.psi.n):
            w = w * f[..., i, :, :]
        return w.sum(axis=(-1, -2)).real


# -- energy-momentum -----------------------------------------------------------


def _weights(psi, frames):
    """Mode-sum weights ``|c_a|^2 prod_k 2 (n.p_{a,k})`` for one frame per term set."""
    np_ = np.einsum("akm,m->ak", psi._p_lower, frames)
    return np.abs(psi._coeffs) ** 2 * np.prod(2.0 * np_, axis=1)


def _self_consistent(f, tol=1e-15, max_iter=500):
    n = np.array([1.0, 0.0, 0.0, 0.0])
    for _ in range(max_iter):
        new = unit_timelike(f(n))
        if np.max(np.abs(new - n)) < tol:
            return new
        n = 0.5 * (n + new) if _ > 50 else new
        n = unit_timelike(n)
    raise DegenerateMomenta("self-consistent momentum frame did not converge")


def total_momentum(psi: MultiTimeWaveFunction, frame=None):
    """Mode-sum total energy-momentum ``sum_a w_a sum_k p_{a,k}``.

    ``frame`` is the unit normal of the hyperplane the weights are taken on;
    ``(1, 0, 0, 0)`` reproduces the plain ``|c_a|^2 prod 2 p^0`` weights.  By
    default the hyperplane orthogonal to the result is used.
    """
    psi.require_distinct()
    tot = psi._p.sum(axis=1)

    def at(n):
        return _weights(psi, n) @ tot

    if frame is None:
        frame = _self_consistent(at)
    return at(check_unit_timelike(np.asarray(frame, dtype=float)))


def per_particle_momentum(psi: MultiTimeWaveFunction, k, frame=None):
    """Slot-``k`` mode sum ``P_k = sum_a w_a p_{a,k}``; see :func:`total_momentum`.

    With ``frame=None`` each ``P_k`` uses its own self-consistent frame, so for
    a product wave function it depends on the factor containing ``k`` only.
    """
    psi.require_distinct()
    pk = psi._p[:, k, :]

    def at(n):
        return _weights(psi, n) @ pk

    if frame is None:
        frame = _self_consistent(at)
    return at(check_unit_timelike(np.asarray(frame, dtype=float)))


def momentum_direction(psi, k=None):
    """Unit normal of the law-(iv) (``k=None``) or law-(v) hyperplanes."""
    p = total_momentum(psi) if k is None else per_particle_momentum(psi, k)
    return unit_timelike(p)


def _pair_tensor(ma: PlaneWaveMode, mb: PlaneWaveMode):
    """Coefficient of ``exp(i (p_a - p_b).x)`` in the symmetrized tensor of one particle."""
    ubar_a = np.conj(ma.spinor) @ ALPHA  # (mu, 4): ubar_a gamma^mu
    cur = ubar_a @ mb.spinor  # ubar_a gamma^mu u_b
    s = ma.four_momentum + mb.four_momentum
    return 0.25 * (np.outer(s, cur) + np.outer(cur, s))


def mass_density_field(psi: MultiTimeWaveFunction, x, frame=None):
    """``sum_k T_k^{mu nu}(x)`` evaluated analytically on the superposition.

    Cross terms survive only between terms whose momenta agree in every slot
    other than ``k``; the surviving spin factor is ``prod_i ubar_a nslash u_b``
    on the hyperplane with normal ``frame`` (default: self-consistent rest frame).
    """
    psi.require_distinct()
    if frame is None:
        frame = momentum_direction(psi)
    frame = check_unit_timelike(np.asarray(frame, dtype=float))
    x = np.asarray(x, dtype=float)
    nslash_ops = np.einsum("m,mab->ab", lower(frame), ALPHA)
    out = np.zeros(x.shape[:-1] + (4, 4), dtype=complex)
    for k in range(psi.n):
        for a, b in iproduct(range(len(psi.terms)), repeat=2):
            pa, pb = psi._p[a], psi._p[b]
            others = [i for i in range(psi.n) if i != k]
            if others and np.max(np.abs(pa[others] - pb[others])) > 1e-12:
                continue
            weight = np.conj(psi._coeffs[a]) * psi._coeffs[b]
            for i in others:
                weight *= np.conj(psi._u[a, i]) @ nslash_ops @ psi._u[b, i]
            ma, mb = psi.terms[a][1][k], psi.terms[b][1][k]
            phase = np.exp(1j * minkowski_dot(pa[k] - pb[k], x))
            out += weight * phase[..., None, None] * _pair_tensor(ma, mb)
    return out.real


def boost_mode(mode: PlaneWaveMode, lam: LorentzTransform, d=None) -> PlaneWaveMode:
    d = spinor_rep_of(lam).d_lambda if d is None else d
    p_new = apply(lam, mode.four_momentum)
    u_new = d @ mode.spinor
    chi = u_new[:2] / np.sqrt(p_new[0] + mode.mass)
    return PlaneWaveMode(mode.mass, p_new[1:], chi)


def boost_wavefunction(psi: MultiTimeWaveFunction, lam: LorentzTransform) -> MultiTimeWaveFunction:
    """``(U psi)(x_1..x_N) = D (x) ... (x) D psi(L^-1 x_1, ..., L^-1 x_N)`` mode by mode."""
    d = spinor_rep_of(lam).d_lambda
    return MultiTimeWaveFunction(
        [(c, tuple(boost_mode(md, lam, d) for md in modes)) for c, modes in psi.terms]
    )


def slot_wavefunction(modes_and_coeffs) -> MultiTimeWaveFunction:
    """Single-particle superposition from ``[(c, mode), ...]``."""
    return MultiTimeWaveFunction([(c, (m,)) for c, m in modes_and_coeffs])


def antisymmetrized_pair(mode_a: PlaneWaveMode, mode_b: PlaneWaveMode) -> MultiTimeWaveFunction:
    s = 1.0 / np.sqrt(2.0)
    return MultiTimeWaveFunction([(s, (mode_a, mode_b)), (-s, (mode_b, mode_a))])


def dirac_residual(psi: MultiTimeWaveFunction, xs, h=1e-4) -> float:
    """Max over k of ``|(i gamma_k^mu d_{k,mu} - m_k) psi|`` by central differences."""
    from .minkowski import GAMMA

    xs = np.asarray(xs, dtype=float)
    n = psi.n
    worst = 0.0
    for k in range(n):
        acc = -psi.masses[k] * psi.evaluate(xs)
        for mu in range(4):
            step = np.zeros_like(xs)
            step[..., k, mu] = h
            deriv = (psi.evaluate(xs + step) - psi.evaluate(xs - step)) / (2 * h)
            acc = acc + 1j * _apply_slot(GAMMA[mu], deriv, k, n)
        scale = max(1.0, float(np.max(np.abs(psi.evaluate(xs)))))
        worst = max(worst, float(np.max(np.abs(acc))) / scale)
    return worst
