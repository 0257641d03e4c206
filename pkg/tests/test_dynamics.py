import numpy as np
import pytest
from hypothesis import given, settings
from scipy.integrate import quad
from scipy.stats import chisquare

import oracles
from helpers import seeds, velocities
from relbohm.dirac import MultiTimeWaveFunction, make_spinor
from relbohm.dynamics import (
    convergence_sweep,
    curve_distance,
    integrate,
    integrate_relaxed,
    lift_to_leaf,
    relaxed_guidance_residual,
    sample_equilibrium,
    transport,
    velocity_field,
    LeafConfiguration,
)
from relbohm.errors import NonConvergence, ValidationError
from relbohm.foliation import Flat, Gradient, Leaf, Momentum, PerParticle
from relbohm.minkowski import minkowski_dot

E0 = np.array([1.0, 0, 0, 0])


def _mode(p, spin="+", m=1.0):
    return make_spinor(p, m, spin)


def _pair():
    return MultiTimeWaveFunction(
        [
            (1.0, (_mode([0.8, 0, 0]), _mode([-0.5, 0.3, 0]))),
            (0.7j, (_mode([-0.6, 0.2, 0], "-"), _mode([0.4, 0, 0.5]))),
            (0.5, (_mode([0, 0.7, 0]), _mode([0.3, -0.6, 0]))),
        ]
    )


PAIR_START = np.array([[0.0, 0.3, 0.1, 0.0], [0.0, -0.4, 0.2, 0.1]])


@given(velocities)
@settings(max_examples=15)
def test_lone_mode_moves_in_straight_line(v):
    p = np.array(v)
    psi = MultiTimeWaveFunction([(1.0, (_mode(p, m=1.3),))])
    x0 = np.array([[0.0, 0.2, -0.1, 0.4]])
    h = integrate(psi, Flat(E0), x0, 1.0, 0.05)
    w = h.worldlines[0]
    for s, x in zip(w.s, w.x):
        assert np.allclose(x, oracles.straight_line(x0[0], p, 1.3, s), atol=1e-12)


def test_lone_mode_straight_under_other_laws():
    p = np.array([0.3, -0.2, 0.5])
    psi = MultiTimeWaveFunction([(1.0, (_mode(p),))])
    x0 = np.array([[0.0, 0.0, 0.0, 0.0]])
    for fol in (Momentum(psi), Gradient("t + 0.1*sin(x)")):
        w = integrate(psi, fol, x0 if fol.label(x0[0]) == 0 else x0, 0.8, 0.01, theory="iv").worldlines[0]
        d = w.x[-1] - w.x[0]
        assert np.allclose(d[1:] / d[0], p / np.sqrt(1 + p @ p), atol=1e-10)
    r = integrate_relaxed(psi, "v", initial=x0, span=(0.1, 0.3), ds=1e-2)
    w = r.worldlines[0]
    assert np.allclose((w.x[-1] - w.x[0])[1:] / (w.x[-1] - w.x[0])[0], p / np.sqrt(1 + p @ p), atol=1e-10)


def test_product_factor_moves_independently():
    a = MultiTimeWaveFunction([(1.0, (_mode([0.3, 0, 0]),)), (0.6j, (_mode([-0.2, 0.4, 0], "-"),))])
    e1 = MultiTimeWaveFunction([(1.0, (_mode([0.1, 0.1, 0]),))])
    e2 = MultiTimeWaveFunction([(1.0, (_mode([-0.5, 0, 0.2]),)), (0.4, (_mode([0.2, 0.2, 0]),))])
    start = np.array([[0.0, 0.1, 0.2, 0.0], [0.0, 2.0, 0.0, 0.0]])
    alone = integrate(a, Flat(E0), start[:1], 1.0, 0.01).worldlines[0]
    for e in (e1, e2):
        h = integrate(a.tensor(e), Flat(E0), start, 1.0, 0.01)
        assert np.max(np.abs(h.worldlines[0].x - alone.x)) < 1e-12


def test_entangled_worldlines_are_causal_and_reversible():
    psi = _pair()
    fwd = integrate(psi, Flat(E0), PAIR_START, 2.0, 0.01)
    for w in fwd.worldlines:
        dd, dt = w.causal_increments()
        assert dd > 0 and dt > 0
    end = np.array([w.x[-1] for w in fwd.worldlines])
    back = integrate(psi, Flat(E0), end, 0.0, 0.01)
    assert np.max(np.abs(np.array([w.x[0] for w in back.worldlines]) - PAIR_START)) < 1e-8


def test_curved_leaves_keep_membership():
    psi = _pair()
    fol = Gradient("t + 0.15*sin(x)*cos(0.5*y) - 0.05*z")
    leaf = Leaf(fol, 0, 0.0)
    start = np.array([lift_to_leaf(leaf, p[1:], k) for k, p in enumerate(PAIR_START)])
    h = integrate(psi, fol, start, 1.0, 0.01, theory="ii")
    assert h.diagnostics["residuals"]["leaf_membership"] < 1e-10


def test_initial_points_must_share_a_leaf():
    with pytest.raises(ValidationError):
        integrate(_pair(), Flat(E0), np.array([[0.0, 0, 0, 0], [0.5, 1, 0, 0]]), 1.0, 0.1)


def test_velocity_field_is_future_causal():
    psi = _pair()
    leaf = Leaf(Flat(E0), 0, 0.0)
    for k in range(2):
        v = velocity_field(psi, Flat(E0), LeafConfiguration(leaf, PAIR_START), k)
        assert minkowski_dot(v, v) > 0 and v[0] > 0


def test_transport_agrees_with_integrate():
    psi = _pair()
    ens = PAIR_START[None] + np.array([[[0, 0, 0, 0], [0, 0, 0, 0]], [[0, 0.5, 0, 0], [0, 0, 0.3, 0]]])
    moved = transport(psi, Flat(E0), ens, 1.0, 0.02)
    for m, start in zip(moved, ens):
        h = integrate(psi, Flat(E0), start, 1.0, 0.02)
        assert np.allclose(m, [w.x[-1] for w in h.worldlines], atol=1e-13)


def test_rk4_endpoint_order():
    r = convergence_sweep(_pair(), Flat(E0), PAIR_START, 4.0, [0.4, 0.2, 0.1, 0.05], 2e-3)
    assert 3.7 < r.slope < 4.3


def test_relaxed_law_v_matches_leaf_law_for_products():
    a = MultiTimeWaveFunction([(1.0, (_mode([0.3, 0, 0]),)), (0.6j, (_mode([-0.2, 0.4, 0], "-"),))])
    e = MultiTimeWaveFunction([(1.0, (_mode([0.1, 0.1, 0]),)), (0.4, (_mode([-0.3, 0, 0.2]),))])
    psi = a.tensor(e)
    start = np.array([[0.0, 0.1, 0.2, 0.0], [0.0, 2.0, 0.0, 0.0]])
    r = integrate_relaxed(psi, "v", initial=start, span=(0.2, 0.4), ds=1e-2)
    assert r.diagnostics["residuals"]["guidance"] < 1e-8
    pp = PerParticle(psi)
    s0 = minkowski_dot(pp.normal_of(0), start[0])
    alone = integrate(a, Flat(pp.normal_of(0)), start[:1], s0 + 0.4, 1e-2).worldlines[0]
    assert curve_distance(alone, r.worldlines[0], 1.0) < 1e-9


def test_relaxed_law_vi_is_self_consistent():
    psi = _pair()
    r = integrate_relaxed(psi, "vi", initial=PAIR_START, span=(0.2, 0.3), ds=1e-2)
    assert relaxed_guidance_residual(psi, "vi", r.worldlines, r.diagnostics["limit"]) < 1e-7
    for w in r.worldlines:
        assert w.causal_increments()[0] > 0


def test_relaxation_budget_exhaustion_reported():
    with pytest.raises(NonConvergence) as info:
        integrate_relaxed(_pair(), "vi", initial=PAIR_START, span=(0.5, 1.0), ds=2e-2, max_iter=1)
    assert info.value.max_iter == 1
    assert info.value.last_residual > 0


def test_lift_lands_on_leaf():
    fol = Gradient("t - 0.2*sin(x) + 0.1*y")
    leaf = Leaf(fol, 0, 0.7)
    p = lift_to_leaf(leaf, [0.4, -0.3, 0.2])
    assert abs(fol.label(p) - 0.7) < 1e-12
    assert np.allclose(p[1:], [0.4, -0.3, 0.2])


def test_fringe_sampling_matches_closed_form():
    k, m, c1, c2 = 1.0, 1.0, 1.0, 0.6j
    psi = MultiTimeWaveFunction([(c1, (_mode([k, 0, 0], m=m),)), (c2, (_mode([-k, 0, 0], m=m),))])
    period = np.pi / k
    box = [[[0.0, period], [0.0, 0.0], [0.0, 0.0]]]
    s = sample_equilibrium(psi, Leaf(Flat(E0), 0, 0.0), box, 20000, seed=7)
    edges = np.linspace(0, period, 11)
    counts, _ = np.histogram(s.points[:, 0, 1], edges)
    mass = np.array([quad(oracles.fringe_density, a, b, args=(k, m, c1, c2))[0] for a, b in zip(edges[:-1], edges[1:])])
    assert chisquare(counts, mass / mass.sum() * counts.sum()).pvalue > 1e-3
    assert np.allclose(s.points[:, 0, 0], 0.0)


@given(seeds)
@settings(max_examples=5)
def test_sampling_independent_of_worker_count(seed):
    psi = _pair()
    box = [[[-1, 1], [-1, 1], [0, 0]]] * 2
    leaf = Leaf(Flat(E0), 0, 0.0)
    a = sample_equilibrium(psi, leaf, box, 600, seed, threads=1, scan_points=2000)
    b = sample_equilibrium(psi, leaf, box, 600, seed, threads=3, scan_points=2000)
    assert np.array_equal(a.points, b.points)


def test_entangled_paths_depend_on_the_foliation():
    # leaves agree at t = 0 and tilt apart later; product states must not notice
    fol = Gradient("t + 0.3*x*t")
    a = MultiTimeWaveFunction([(1.0, (_mode([0.3, 0, 0]),)), (0.6j, (_mode([-0.2, 0.4, 0], "-"),))])
    e = MultiTimeWaveFunction([(1.0, (_mode([0.1, 0.1, 0]),)), (0.4, (_mode([-0.3, 0, 0.2]),))])
    gaps = {}
    for name, psi in (("entangled", _pair()), ("product", a.tensor(e))):
        flat = integrate(psi, Flat(E0), PAIR_START, 3.0, 1e-2)
        tilted = integrate(psi, fol, PAIR_START, 1.0, 1e-2, theory="iii")
        gaps[name] = max(curve_distance(t, f) for t, f in zip(tilted.worldlines, flat.worldlines))
    assert gaps["entangled"] > 1e-3
    assert gaps["product"] < 1e-10
