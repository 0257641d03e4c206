"""Equivariance of the equilibrium crossing distribution under law (i).

The witness states use modes whose momenta are integer multiples of a base
wave number along x.  Density and velocity field are then periodic in each
particle's x coordinate, so sampling one period cell and wrapping the
transported points back into it tests the full (unbounded) measure exactly.
Transverse coordinates are inert for such states and stay pinned.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import chi2_contingency

from .dynamics import sample_equilibrium, transport
from .errors import ValidationError
from .foliation import Flat, Foliation, Leaf
from .minkowski import lower

E0 = np.array([1.0, 0.0, 0.0, 0.0])


class StaggeredTime(Foliation):
    """``t = offset_k + label`` for particle ``k``: a product of time slices, not a leaf.

    Its label-0 set is the configuration surface ``{t_1 = offset_1} x ... x
    {t_N = offset_N}``; used to ask what the crossing law on a non-simultaneous
    surface looks like.
    """

    kind = "staggered"
    constant_normal = True
    uniform = False

    def __init__(self, offsets):
        self.offsets = np.asarray(offsets, dtype=float)

    def label(self, x, k=0):
        return np.asarray(x, dtype=float)[..., 0] - self.offsets[k]

    def label_gradient(self, x, k=0):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(lower(E0), x.shape).copy()

    def normal(self, x, k=0):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(E0, x.shape).copy()


def period_box(psi, period, pinned=0.0):
    """One period cell in x per particle; y and z pinned."""
    box = np.full((psi.n, 3, 2), float(pinned))
    box[:, 0, 0], box[:, 0, 1] = 0.0, period
    return box


def check_periodic(psi, period, tol=1e-9):
    """Every x momentum must be an integer multiple of ``2 pi / period``; transverse momenta zero."""
    k0 = 2 * np.pi / period
    p = psi._p[..., 1:]
    ratio = p[..., 0] / k0
    if np.max(np.abs(ratio - np.round(ratio))) > tol or np.max(np.abs(p[..., 1:])) > tol:
        raise ValidationError("witness state must have x momenta on the lattice 2 pi / period and no transverse momenta")


def joint_counts(xs, period, bins):
    """``bins^N`` table of wrapped x coordinates (``xs`` has shape (M, N))."""
    w = np.mod(xs, period)
    idx = np.minimum((w / period * bins).astype(int), bins - 1)
    flat = np.ravel_multi_index(tuple(idx.T), (bins,) * xs.shape[1])
    return np.bincount(flat, minlength=bins ** xs.shape[1])


def two_sample_p(a, b):
    table = np.array([a, b])
    table = table[:, table.sum(axis=0) > 0]
    return float(chi2_contingency(table, correction=False)[1])


@dataclass
class EquivarianceResult:
    p_value: float
    transported: np.ndarray
    direct: np.ndarray


def equivariance_test(psi, period, t_end, count, seed, *, ds=1e-2, bins=5, threads=1) -> EquivarianceResult:
    """Transport time-slice equilibrium to ``t_end`` and compare with direct sampling there."""
    check_periodic(psi, period)
    fol = Flat(E0)
    box = period_box(psi, period)
    start = sample_equilibrium(psi, Leaf(fol, 0, 0.0), box, count, seed, threads=threads)
    moved = transport(psi, fol, start.points, t_end, ds, threads=threads)
    direct = sample_equilibrium(psi, Leaf(fol, 0, float(t_end)), box, count, seed + 1, threads=threads)
    a = joint_counts(moved[..., 1], period, bins)
    b = joint_counts(direct.points[..., 1], period, bins)
    return EquivarianceResult(two_sample_p(a, b), a, b)


def non_leaf_control(psi, period, t_end, count, seed, *, ds=1e-2, bins=5, threads=1, late=1) -> EquivarianceResult:
    """Crossings of ``{t=0}`` by all particles except ``late``, which is read at ``t_end``.

    The trajectories are law-(i) trajectories started in equilibrium; they are
    compared with direct sampling from ``|psi|^2`` evaluated on that
    non-simultaneous surface.
    """
    check_periodic(psi, period)
    fol = Flat(E0)
    box = period_box(psi, period)
    start = sample_equilibrium(psi, Leaf(fol, 0, 0.0), box, count, seed, threads=threads)
    moved = transport(psi, fol, start.points, t_end, ds, threads=threads)
    mixed = start.points[..., 1].copy()
    mixed[:, late] = moved[:, late, 1]
    offsets = np.zeros(psi.n)
    offsets[late] = t_end
    surface = Leaf(StaggeredTime(offsets), 0, 0.0)
    direct = sample_equilibrium(psi, surface, box, count, seed + 1, threads=threads)
    a = joint_counts(mixed, period, bins)
    b = joint_counts(direct.points[..., 1], period, bins)
    return EquivarianceResult(two_sample_p(a, b), a, b)


def witness_state(k0=1.0, mass=1.0):
    """Entangled pair on the lattice ``k0``: ``(k, -k) + i (-k, k) + 0.8 (2k, 0)``, all spin up.

    Returns ``(psi, period)``.
    """
    from .dirac import MultiTimeWaveFunction, make_spinor

    mode = lambda n: make_spinor([n * k0, 0.0, 0.0], mass, "+")  # noqa: E731
    psi = MultiTimeWaveFunction([(1.0, (mode(1), mode(-1))), (1j, (mode(-1), mode(1))), (0.8, (mode(2), mode(0)))])
    return psi, 2 * np.pi / k0
