"""Flash-ontology collapse law over finite cell partitions.

The joint law of the flashes is ``<psi0| E_1 (x) ... (x) E_N |psi0>`` with one
positive operator per particle.  Everything lives in a finite mode space:
particle ``k``'s basis is (distinct momentum) x (spin up/down along z) built
from the modes of a :class:`MultiTimeWaveFunction`, with the Lorentz-invariant
normalisation ``<p, s|p', s'> = delta delta``.  In that normalisation a
Lorentz transformation acts on each particle by a unitary (momenta relabelled,
spins Wigner-rotated), which is what makes the covariance identity exact.

POVMs are supplied as dense matrices; :func:`toy_povm` builds a default
family from smeared cell vectors.  Multi-generation laws compose per
generation Kraus factors ``K_c`` (``E_c = K_c^dagger K_c``).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product as iproduct

import numpy as np
from scipy.linalg import sqrtm

from .dirac import MultiTimeWaveFunction, PlaneWaveMode, boost_wavefunction, make_spinor
from .errors import IncompletePOVM, MismatchedModeSets, NonPositiveOperator, NotAProductState, ValidationError
from .minkowski import LorentzTransform, apply, minkowski_dot, spinor_rep_of
from .parallel import chunked_map, chunks, member_rng

PSD_TOL = 1e-12
COMPLETE_TOL = 1e-10


def _key(p):
    return tuple(np.round(np.asarray(p, dtype=float), 12))


@dataclass(eq=False)
class ModeSpaceState:
    """Normalized coefficient tensor over per-particle (momentum, spin) bases.

    ``momenta[k]`` lists particle ``k``'s distinct four-momenta in basis order;
    basis index ``2 * j + s`` is momentum ``j`` with spin ``s`` (0 = up).
    """

    momenta: list
    masses: tuple
    coefficients: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coefficients, dtype=complex)
        norm = np.linalg.norm(c)
        if norm == 0:
            raise ValidationError("zero state")
        self.coefficients = c / norm

    @property
    def n(self):
        return len(self.momenta)

    @property
    def dims(self):
        return tuple(2 * len(m) for m in self.momenta)

    @classmethod
    def from_wavefunction(cls, psi: MultiTimeWaveFunction):
        momenta = []
        index = []
        for k in range(psi.n):
            keys = sorted({_key(p) for p in psi._p[:, k, :]})
            momenta.append([np.array(kk) for kk in keys])
            index.append({kk: j for j, kk in enumerate(keys)})
        dims = tuple(2 * len(m) for m in momenta)
        c = np.zeros(dims, dtype=complex)
        for coeff, modes in psi.terms:
            vecs = []
            for k, md in enumerate(modes):
                v = np.zeros(dims[k], dtype=complex)
                j = index[k][_key(md.four_momentum)]
                v[2 * j : 2 * j + 2] = md.chi
                vecs.append(v)
            t = coeff
            for v in vecs:
                t = np.multiply.outer(t, v)
            c += t
        return cls(momenta, psi.masses, c)

    def basis_mode(self, k, index) -> PlaneWaveMode:
        p = self.momenta[k][index // 2]
        return make_spinor(p[1:], self.masses[k], "+-"[index % 2])

    def split(self, m):
        """``(psi_s, psi_e)`` for particles ``[0, m)`` and ``[m, N)``.

        Raises :class:`NotAProductState` unless the tensor has Schmidt rank 1.
        """
        ds = int(np.prod(self.dims[:m]))
        mat = self.coefficients.reshape(ds, -1)
        u, s, vh = np.linalg.svd(mat)
        if len(s) > 1 and s[1] > 1e-12:
            raise NotAProductState(f"state is entangled across the split (second Schmidt value {s[1]:.3e})")
        a = (u[:, 0] * s[0]).reshape(self.dims[:m])
        b = vh[0].reshape(self.dims[m:])
        return (
            ModeSpaceState(self.momenta[:m], self.masses[:m], a),
            ModeSpaceState(self.momenta[m:], self.masses[m:], b),
        )

    def tensor(self, other: "ModeSpaceState") -> "ModeSpaceState":
        return ModeSpaceState(
            self.momenta + other.momenta,
            tuple(self.masses) + tuple(other.masses),
            np.multiply.outer(self.coefficients, other.coefficients),
        )


def lorentz_unitary(momenta, mass, lam: LorentzTransform, new_momenta):
    """Matrix of ``U_Lambda`` from one particle's basis to the boosted basis.

    ``U[i', i] = u'_{i'}^dagger D u_i / (2 p'^0)`` when ``p'_{i'} = Lambda p_i``
    and 0 otherwise.  Unitary whenever the momentum sets correspond.
    """
    d = spinor_rep_of(lam).d_lambda
    dim, dim_new = 2 * len(momenta), 2 * len(new_momenta)
    if dim != dim_new:
        raise MismatchedModeSets("boosted basis has a different size")
    lookup = {_key(p): j for j, p in enumerate(new_momenta)}
    u = np.zeros((dim_new, dim), dtype=complex)
    for j, p in enumerate(momenta):
        pj = apply(lam, p)
        jj = lookup.get(_key(pj))
        if jj is None:
            raise MismatchedModeSets("boosted momentum missing from the target basis")
        for s in range(2):
            src = d @ make_spinor(p[1:], mass, "+-"[s]).spinor
            for s2 in range(2):
                dst = make_spinor(new_momenta[jj][1:], mass, "+-"[s2]).spinor
                u[2 * jj + s2, 2 * j + s] = np.conj(dst) @ src / (2 * new_momenta[jj][0])
    return u


def boost_state(state: ModeSpaceState, lam: LorentzTransform, particles=None):
    """``U_Lambda`` on the listed particles; returns (new state, per-particle unitaries)."""
    sel = range(state.n) if particles is None else particles
    momenta, us = [], []
    c = state.coefficients
    for k in range(state.n):
        if k in sel:
            new = sorted((apply(lam, p) for p in state.momenta[k]), key=_key)
            new = [np.array(_key(p)) for p in new]
            u = lorentz_unitary(state.momenta[k], state.masses[k], lam, new)
        else:
            new, u = state.momenta[k], np.eye(state.dims[k])
        momenta.append(new)
        us.append(u)
        c = np.moveaxis(np.tensordot(u, c, axes=([1], [k])), 0, k)
    return ModeSpaceState(momenta, state.masses, c), us


@dataclass(eq=False)
class FlashPOVM:
    """One particle's cells and operators.

    ``kraus[g][c]`` is the generation-``g`` Kraus factor for cell ``c``;
    ``operators`` (``E_c = K_c^dagger K_c`` of generation 0) are derived.
    """

    cells: np.ndarray  # (C, 4) centroids
    kraus: list

    def __post_init__(self):
        self.cells = np.asarray(self.cells, dtype=float)
        self.kraus = [np.asarray(k, dtype=complex) for k in self.kraus]
        for gen in self.kraus:
            if gen.shape[0] != len(self.cells):
                raise ValidationError("one Kraus factor per cell is required")
            _validate([k.conj().T @ k for k in gen])

    @classmethod
    def from_operators(cls, cells, operators, generations=1, evolution=None):
        """POVM from effects ``E_c``; Kraus factors ``sqrt(E_c) V^g``.

        ``evolution`` is an optional unitary ``V`` applied between generations.
        """
        ops = [np.asarray(e, dtype=complex) for e in operators]
        _validate(ops)
        roots = np.array([_psd_sqrt(e) for e in ops])
        v = np.eye(ops[0].shape[0]) if evolution is None else np.asarray(evolution, dtype=complex)
        gens = []
        vg = np.eye(ops[0].shape[0], dtype=complex)
        for _ in range(generations):
            gens.append(np.einsum("cab,bd->cad", roots, vg))
            vg = v
        return cls(cells, gens)

    @property
    def operators(self):
        return np.array([k.conj().T @ k for k in self.kraus[0]])

    @property
    def dim(self):
        return self.kraus[0].shape[-1]

    @property
    def generations(self):
        return len(self.kraus)

    def composite(self, n):
        """Effects ``K_1^dag..K_n^dag K_n..K_1`` for every cell tuple of length ``n``."""
        if n > len(self.kraus):
            raise ValidationError(f"POVM has only {len(self.kraus)} generations")
        labels, ops = [], []
        for cells in iproduct(range(len(self.cells)), repeat=n):
            m = np.eye(self.dim, dtype=complex)
            for g, c in enumerate(cells):
                m = self.kraus[g][c] @ m
            labels.append(cells)
            ops.append(m.conj().T @ m)
        return labels, np.array(ops)

    def transformed(self, u, lam: LorentzTransform | None = None):
        """``E' = U E U^dagger`` (Kraus ``U K U^dagger``) with cells mapped by ``lam``."""
        cells = self.cells if lam is None else apply(lam, self.cells)
        return FlashPOVM(cells, [np.einsum("ab,cbd,ed->cae", u, k, u.conj()) for k in self.kraus])


def _psd_sqrt(e):
    w, v = np.linalg.eigh((e + e.conj().T) / 2)
    return (v * np.sqrt(np.clip(w, 0, None))) @ v.conj().T


def _validate(ops):
    total = np.zeros_like(ops[0])
    for e in ops:
        if np.max(np.abs(e - e.conj().T)) > 1e-10:
            raise NonPositiveOperator("operator is not Hermitian")
        if np.min(np.linalg.eigvalsh((e + e.conj().T) / 2)) < -PSD_TOL:
            raise NonPositiveOperator("operator has a negative eigenvalue")
        total = total + e
    if np.max(np.abs(total - np.eye(len(total)))) > COMPLETE_TOL:
        raise IncompletePOVM(f"effects sum to identity only within {np.max(np.abs(total - np.eye(len(total)))):.3e}")


def toy_povm(momenta, mass, cells, smear=0.5, generations=1, step=None) -> FlashPOVM:
    """Default POVM: smeared cell vectors, completeness-normalized.

    For cell centroid ``X_c`` the momentum-space vector is
    ``v_c[p] = exp(i p.X_c - smear^2 |p|^2 / 2)``; ``F_c = |v_c><v_c| (x) 1_spin``
    and ``E_c = S^-1/2 F_c S^-1/2`` with ``S = sum_c F_c``.  ``step`` adds a
    free evolution ``exp(-i p^0 step)`` between generations.
    """
    cells = np.asarray(cells, dtype=float)
    p = np.array(momenta)
    phases = np.exp(1j * minkowski_dot(cells[:, None, :], p[None, :, :]))
    damp = np.exp(-0.5 * smear**2 * np.sum(p[:, 1:] ** 2, axis=-1))
    vec = phases * damp
    f = np.array([np.kron(np.outer(v, v.conj()), np.eye(2)) for v in vec])
    s = f.sum(axis=0)
    if np.linalg.matrix_rank(s, tol=1e-10) < len(s):
        raise IncompletePOVM("cells do not resolve every mode; add cells")
    s_half = np.linalg.inv(sqrtm(s))
    ops = [s_half @ fc @ s_half.conj().T for fc in f]
    ops = [(e + e.conj().T) / 2 for e in ops]
    v = None if step is None else np.kron(np.diag(np.exp(-1j * p[:, 0] * step)), np.eye(2))
    return FlashPOVM.from_operators(cells, ops, generations, v)


@dataclass(eq=False)
class FlashDistribution:
    table: np.ndarray  # one axis per particle
    labels: list  # per particle, the list of cell tuples
    raw_min: float
    povms: list = field(default_factory=list)

    def probabilities(self):
        return np.clip(self.table, 0.0, None)


def flash_distribution(state: ModeSpaceState, povms, generations=None) -> FlashDistribution:
    """Joint table ``<psi| E^(n_1) (x) ... (x) E^(n_N) |psi>`` over cell tuples."""
    if len(povms) != state.n:
        raise ValidationError("one POVM per particle is required")
    gens = [1] * state.n if generations is None else list(generations)
    c = state.coefficients
    labels = []
    t = c
    for k, (pv, n) in enumerate(zip(povms, gens)):
        if pv.dim != state.dims[k]:
            raise MismatchedModeSets(f"POVM for particle {k} has dimension {pv.dim}, state has {state.dims[k]}")
        lab, ops = pv.composite(n)
        labels.append(lab)
        # apply ops on axis k, new outcome axis appended at the end
        t = np.moveaxis(np.tensordot(ops, t, axes=([2], [k])), 1, k + 1)
        t = np.moveaxis(t, 0, -1)
    # t has spin axes then outcome axes: contract with conj(c)
    idx = "abcdefgh"[: state.n]
    outs = "pqrstuvw"[: state.n]
    table = np.einsum(f"{idx},{idx}{outs}->{outs}", np.conj(c), t).real
    total = float(table.sum())
    if abs(total - 1.0) > COMPLETE_TOL:
        raise IncompletePOVM(f"probabilities sum to {total!r}")
    return FlashDistribution(table, labels, float(table.min()), list(povms))


@dataclass(eq=False)
class FlashRecord:
    """Sampled outcomes: ``draws[d][k]`` is particle ``k``'s cell tuple in draw ``d``."""

    draws: list
    cells: list  # per particle centroid arrays

    def rows(self):
        for draw in self.draws:
            for k, cells in enumerate(draw):
                for g, c in enumerate(cells):
                    yield (k, g, c, *self.cells[k][c])


def sample_flashes(dist: FlashDistribution, seed: int, count: int = 1, *, threads=1) -> FlashRecord:
    """Categorical draws from the table, chunked on a keyed random stream."""
    p = dist.probabilities().ravel()
    p = p / p.sum()
    jobs = [(p, seed, j, hi - lo) for j, (lo, hi) in enumerate(chunks(count, 4096))]
    idx = np.concatenate(chunked_map(_draw_chunk, jobs, threads)) if jobs else np.array([], dtype=int)
    shape = dist.table.shape
    draws = []
    for flat in idx:
        multi = np.unravel_index(flat, shape)
        draws.append([dist.labels[k][i] for k, i in enumerate(multi)])
    return FlashRecord(draws, [pv.cells for pv in dist.povms])


def _draw_chunk(p, seed, chunk, size):
    rng = member_rng(seed, chunk)
    cdf = np.cumsum(p)
    cdf[-1] = 1.0
    return np.searchsorted(cdf, rng.random(size), side="right")


def boost_povms(state: ModeSpaceState, povms, lam, particles=None, transform_povms=True):
    """Boost state (and, unless disabled, the POVMs) on the listed particles."""
    new_state, us = boost_state(state, lam, particles)
    sel = range(state.n) if particles is None else particles
    new_povms = []
    for k, pv in enumerate(povms):
        if k in sel and transform_povms:
            new_povms.append(pv.transformed(us[k], lam))
        else:
            new_povms.append(pv)
    return new_state, new_povms


def covariance_check(state: ModeSpaceState, povms, lam, generations=None, *, transform_povms=True) -> float:
    """``max |P^psi(cells) - P^{U psi}(Lambda cells)|``.

    With ``transform_povms=False`` the original operators are reused in the
    boosted frame (the negative control).
    """
    p0 = flash_distribution(state, povms, generations).table
    s1, pv1 = boost_povms(state, povms, lam, transform_povms=transform_povms)
    p1 = flash_distribution(s1, pv1, generations).table
    return float(np.max(np.abs(p0 - p1)))


def factorization_check(state: ModeSpaceState, povms, m, generations=None, *, strict=True) -> float:
    """``max |P^psi - P^{psi_s} P^{psi_e}|`` for the split after particle ``m``.

    ``strict=False`` skips the product check and compares against the product
    of the two marginals instead (used to exhibit entangled counterexamples).
    """
    gens = [1] * state.n if generations is None else list(generations)
    joint = flash_distribution(state, povms, gens).table
    if strict:
        s, e = state.split(m)
        ps = flash_distribution(s, povms[:m], gens[:m]).table
        pe = flash_distribution(e, povms[m:], gens[m:]).table
    else:
        axes_s = tuple(range(m))
        axes_e = tuple(range(m, state.n))
        ps = joint.sum(axis=axes_e)
        pe = joint.sum(axis=axes_s)
    return float(np.max(np.abs(joint - np.multiply.outer(ps, pe))))


def subsystem_boost_check(state: ModeSpaceState, povms, m, lam, generations=None) -> float:
    """Boost only particles ``[0, m)`` with their POVMs; compare to the original law.

    For a product state the boosted joint law must equal the original one
    (boosted subsystem distribution times the untouched environment's).
    """
    p0 = flash_distribution(state, povms, generations).table
    s1, pv1 = boost_povms(state, povms, lam, particles=range(m))
    p1 = flash_distribution(s1, pv1, generations).table
    return float(np.max(np.abs(p0 - p1)))


def marginal_consistency(state: ModeSpaceState, povms, k=0) -> float:
    """Two-generation table on particle ``k`` summed over generation 2 vs one generation."""
    gens2 = [1] * state.n
    gens2[k] = 2
    two = flash_distribution(state, povms, gens2)
    one = flash_distribution(state, povms).table
    ncell = len(povms[k].cells)
    shape = list(two.table.shape)
    shape[k : k + 1] = [ncell, ncell]
    summed = two.table.reshape(shape).sum(axis=k + 1)
    return float(np.max(np.abs(summed - one)))


def state_from_dict(d) -> ModeSpaceState:
    """Build a state from ``{"wavefunction": ...}`` or dense ``{"momenta", "masses", "coefficients"}``."""
    if "wavefunction" in d:
        return ModeSpaceState.from_wavefunction(MultiTimeWaveFunction.from_dict(d["wavefunction"]))
    c = np.asarray(d["coefficients"], dtype=float)
    c = c[..., 0] + 1j * c[..., 1]
    return ModeSpaceState([np.asarray(m, dtype=float) for m in d["momenta"]], tuple(d["masses"]), c)


def wavefunction_state(psi: MultiTimeWaveFunction, lam=None):
    """Mode-space state of ``psi`` or of ``U_Lambda psi``."""
    return ModeSpaceState.from_wavefunction(psi if lam is None else boost_wavefunction(psi, lam))


def projective_povm(dim, cells, basis=None, generations=1) -> FlashPOVM:
    """One projector per basis vector (columns of ``basis``, default the standard basis)."""
    b = np.eye(dim, dtype=complex) if basis is None else np.asarray(basis, dtype=complex)
    return FlashPOVM.from_operators(cells, [np.outer(b[:, i], b[:, i].conj()) for i in range(dim)], generations)


@dataclass(eq=False)
class FlashCase:
    name: str
    state: ModeSpaceState
    povms: list
    boost: LorentzTransform
    generations: list
    split: int | None = None


def _line_cells(count, spacing=1.5, t=0.0):
    return np.array([[t, spacing * i, 0.0, 0.0] for i in range(count)])


def shipped_suite(mass=1.0) -> list:
    """Cases covering one to three particles, two generations and several boosts."""
    from .minkowski import boost_from_velocity, compose, rotation

    m = mass
    pa, pb, pc = [0.3, 0.0, 0.1], [-0.2, 0.4, 0.0], [0.0, -0.3, 0.5]
    mode = lambda p, s: make_spinor(p, m, s)
    boosts = [
        boost_from_velocity([0.4, -0.3, 0.2]),
        boost_from_velocity([0.0, 0.0, 0.8]),
        compose(rotation([1, 1, 0], 0.7), boost_from_velocity([-0.5, 0.1, 0.0])),
    ]
    entangled = MultiTimeWaveFunction(
        [(1, (mode(pa, "+"), mode(pb, "-"))), (0.7j, (mode(pb, "+"), mode(pa, "+"))), (0.3, (mode(pa, "-"), mode(pa, "+")))]
    )
    product = MultiTimeWaveFunction(
        [
            (1, (mode(pa, "+"), mode(pb, "-"))),
            (0.5, (mode(pb, "+"), mode(pb, "-"))),
            (0.2j, (mode(pa, "+"), mode(pa, "-"))),
            (0.1j, (mode(pb, "+"), mode(pa, "-"))),
        ]
    )
    single = MultiTimeWaveFunction([(1, (mode(pa, "+"),)), (0.6 - 0.2j, (mode(pb, "-"),)), (0.4, (mode(pc, [1, 1j]),))])
    three = MultiTimeWaveFunction(
        [(1, (mode(pa, "+"), mode(pb, "+"), mode(pc, "-"))), (-0.8j, (mode(pb, "-"), mode(pa, "+"), mode(pc, "-")))]
    )
    # (psi_s over particle 0) x (entangled environment over particles 1, 2)
    env = [(1, (mode(pb, "+"), mode(pc, "-"))), (0.9j, (mode(pc, "+"), mode(pb, "-")))]
    sub = [(1, (mode(pa, "+"),)), (0.5 - 0.5j, (mode(pc, "-"),))]
    product3 = MultiTimeWaveFunction([(a * b, ma + mb) for a, ma in sub for b, mb in env])

    cases = []

    def add(name, psi, ncells, boost, gens, split=None, smear=0.5, step=None):
        st = ModeSpaceState.from_wavefunction(psi)
        cells = _line_cells(ncells)
        pvs = [toy_povm(st.momenta[k], m, cells, smear, max(gens), step) for k in range(st.n)]
        cases.append(FlashCase(name, st, pvs, boost, list(gens), split))

    add("single-particle, 3 cells", single, 3, boosts[0], [1])
    add("single-particle, 2 generations", single, 3, boosts[1], [2], step=0.9)
    add("entangled pair, 2 cells", entangled, 2, boosts[0], [1, 1])
    add("entangled pair, 3 cells", entangled, 3, boosts[1], [1, 1], smear=0.3)
    add("entangled pair, rotation+boost", entangled, 3, boosts[2], [1, 1])
    add("entangled pair, 2 generations on one particle", entangled, 3, boosts[0], [2, 1], step=0.7)
    add("entangled pair, 2 generations each", entangled, 2, boosts[2], [2, 2], step=0.4)
    add("product pair", product, 3, boosts[0], [1, 1], split=1)
    add("product pair, 2 generations", product, 2, boosts[1], [2, 1], split=1, step=0.5)
    add("three particles", three, 2, boosts[2], [1, 1, 1])
    add("three particles, subsystem product", product3, 2, boosts[0], [1, 1, 1], split=1)
    return cases


def covariance_negative_control(mass=1.0):
    """Entangled state with the operators left untransformed: discrepancy well above 1e-3."""
    from .minkowski import boost_from_velocity

    pa, pb = [0.9, 0.0, 0.0], [-0.9, 0.0, 0.0]
    mode = lambda p, s: make_spinor(p, mass, s)
    psi = MultiTimeWaveFunction([(1, (mode(pa, "+"), mode(pb, "-"))), (1j, (mode(pb, "+"), mode(pa, "-")))])
    st = ModeSpaceState.from_wavefunction(psi)
    cells = _line_cells(2, 1.0)
    pvs = [toy_povm(st.momenta[k], mass, cells, 0.2) for k in range(2)]
    return st, pvs, boost_from_velocity([0.0, 0.7, 0.0])


def bell_negative_control(mass=1.0):
    """Maximally entangled pair and projectors onto the Schmidt basis."""
    pa, pb = [0.3, 0.0, 0.0], [-0.3, 0.0, 0.0]
    mode = lambda p, s: make_spinor(p, mass, s)
    psi = MultiTimeWaveFunction([(1, (mode(pa, "+"), mode(pa, "+"))), (1, (mode(pb, "+"), mode(pb, "+")))])
    st = ModeSpaceState.from_wavefunction(psi)
    # basis: (pa up, pa down, pb up, pb down) after momentum sort
    pvs = [projective_povm(4, _line_cells(4)) for _ in range(2)]
    return st, pvs
