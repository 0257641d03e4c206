import numpy as np
import pytest
from hypothesis import given

import oracles
from helpers import random_mode, random_state, random_transform, random_unit_timelike, seeds, velocities
from relbohm.dirac import (
    CurrentKernel,
    MultiTimeWaveFunction,
    antisymmetrized_pair,
    boost_mode,
    boost_wavefunction,
    contracted_density,
    current_tensor,
    dirac_operator_residual,
    dirac_residual,
    guidance_current,
    make_spinor,
    mass_density_field,
    momentum_direction,
    per_particle_momentum,
    total_momentum,
)
from relbohm.errors import ArityMismatch, DegenerateMomenta, NonPositiveMass
from relbohm.minkowski import ALPHA, GAMMA, apply, boost_from_velocity, minkowski_dot, spinor_rep_of


@given(seeds)
def test_spinor_matches_explicit_form(seed):
    rng = np.random.default_rng(seed)
    md = random_mode(rng)
    assert np.allclose(md.spinor, oracles.spinor(md.momentum3, md.mass, md.chi), atol=1e-13)
    assert dirac_operator_residual(md) < 1e-12


@given(seeds)
def test_spinor_normalization(seed):
    md = random_mode(np.random.default_rng(seed))
    u = md.spinor
    assert np.conj(u) @ GAMMA[0] @ u == pytest.approx(2 * md.mass, rel=1e-12)
    assert np.vdot(u, u).real == pytest.approx(2 * md.energy, rel=1e-12)
    assert np.allclose((np.conj(u) @ ALPHA @ u).real, 2 * md.four_momentum)


def test_nonpositive_mass_rejected():
    with pytest.raises(NonPositiveMass):
        make_spinor([0, 0, 0], 0.0)


@given(seeds)
def test_exact_solution_residual(seed):
    rng = np.random.default_rng(seed)
    psi = random_state(rng)
    xs = rng.uniform(-2, 2, (5, psi.n, 4))
    assert dirac_residual(psi, xs) < 1e-6


def test_residual_detects_off_shell_wave():
    psi = random_state(np.random.default_rng(3), n=2, terms=2)
    psi._p_lower = psi._p_lower.copy()
    psi._p_lower[..., 0] *= 1.01
    xs = np.random.default_rng(4).uniform(-1, 1, (3, 2, 4))
    assert dirac_residual(psi, xs) > 1e-3


def test_tensor_product_evaluates_as_outer_product():
    rng = np.random.default_rng(5)
    a, b = random_state(rng, n=1, terms=2), random_state(rng, n=2, terms=2)
    xs = rng.normal(size=(3, 4))
    got = a.tensor(b).evaluate(xs)
    want = np.multiply.outer(a.evaluate(xs[:1]), b.evaluate(xs[1:]))
    assert np.allclose(got, want)


def test_arity_checked():
    psi = random_state(np.random.default_rng(0), n=2)
    with pytest.raises(ArityMismatch):
        psi.evaluate(np.zeros((3, 4)))


def test_dict_round_trip():
    psi = random_state(np.random.default_rng(7), n=2, terms=3)
    again = MultiTimeWaveFunction.from_dict(psi.to_dict())
    xs = np.random.default_rng(8).normal(size=(4, 2, 4))
    assert np.allclose(psi.evaluate(xs), again.evaluate(xs))


def test_antisymmetrized_pair_changes_sign_under_exchange():
    a = make_spinor([0.3, 0, 0], 1.0, "+")
    b = make_spinor([-0.1, 0.2, 0], 1.0, "-")
    psi = antisymmetrized_pair(a, b)
    x, y = np.array([0.4, 1.0, -0.5, 0.2]), np.array([-0.3, 0.1, 0.7, 1.0])
    assert np.allclose(psi.evaluate(np.array([x, y])), -psi.evaluate(np.array([y, x])).T, atol=1e-14)


@given(seeds)
def test_current_tensor_is_real(seed):
    rng = np.random.default_rng(seed)
    psi = random_state(rng, n=int(rng.integers(1, 3)))
    _, residue = current_tensor(psi, rng.normal(size=(psi.n, 4)), return_residue=True)
    assert residue < 1e-10


@given(seeds)
def test_contracted_current_agrees_across_forms(seed):
    rng = np.random.default_rng(seed)
    psi = random_state(rng, n=2)
    xs = rng.normal(size=(2, 4))
    normals = random_unit_timelike(rng, (2,))
    j = current_tensor(psi, xs)
    for k in range(2):
        other = normals[1 - k] * np.array([1, -1, -1, -1])
        want = j @ other if k == 0 else other @ j
        direct = guidance_current(psi, xs, normals, k)
        assert np.allclose(direct, want, atol=1e-9 * max(1, np.max(np.abs(want))))
        assert np.allclose(CurrentKernel(psi).current(xs, normals, k), direct, atol=1e-9 * max(1, np.max(np.abs(direct))))
    dens = contracted_density(psi, xs, normals)
    assert dens == pytest.approx(CurrentKernel(psi).density(xs, normals), rel=1e-9)


@given(seeds)
def test_surface_currents_are_causal(seed):
    rng = np.random.default_rng(seed)
    psi = random_state(rng)
    xs = rng.uniform(-3, 3, (psi.n, 4))
    normals = random_unit_timelike(rng, (psi.n,))
    for k in range(psi.n):
        j = guidance_current(psi, xs, normals, k)
        assert minkowski_dot(j, j) >= -1e-10 * max(1.0, j[0] ** 2)
        assert j[0] >= -1e-12


def test_fringe_density_matches_closed_form():
    k, m, c1, c2 = 0.7, 1.3, 1.0, 0.4 - 0.3j
    psi = MultiTimeWaveFunction([(c1, (make_spinor([k, 0, 0], m),)), (c2, (make_spinor([-k, 0, 0], m),))])
    xs = np.linspace(-3, 3, 25)
    pts = np.zeros((25, 1, 4))
    pts[:, 0, 1] = xs
    normals = np.broadcast_to([1.0, 0, 0, 0], pts.shape)
    got = contracted_density(psi, pts, normals)
    assert np.allclose(got, oracles.fringe_density(xs, k, m, c1, c2), rtol=1e-12)


@given(seeds)
def test_boosted_state_is_pointwise_transform(seed):
    rng = np.random.default_rng(seed)
    psi = random_state(rng, n=int(rng.integers(1, 3)))
    lam = random_transform(rng)
    d = spinor_rep_of(lam).d_lambda
    boosted = boost_wavefunction(psi, lam)
    for _ in range(5):
        xs = rng.uniform(-2, 2, (psi.n, 4))
        want = psi.evaluate(apply(lam.inverse(), xs))
        for slot in range(psi.n):
            want = np.moveaxis(np.tensordot(d, want, axes=(1, slot)), 0, slot)
        scale = max(1.0, np.max(np.abs(want)))
        assert np.max(np.abs(boosted.evaluate(xs) - want)) < 1e-10 * scale


def test_boost_along_spin_axis_keeps_spin_label():
    md = make_spinor([0, 0, 0.4], 1.0, "+")
    lam = boost_from_velocity([0, 0, 0.5])
    out = boost_mode(md, lam)
    assert np.allclose(out.chi, [1, 0], atol=1e-13)
    assert np.allclose(out.four_momentum, apply(lam, md.four_momentum))


@given(velocities)
def test_single_mode_momentum(v):
    p = np.array(v)
    psi = MultiTimeWaveFunction([(0.3j, (make_spinor(p, 1.7),))])
    e = np.sqrt(1.7**2 + p @ p)
    assert np.allclose(momentum_direction(psi), np.concatenate([[e], p]) / 1.7, atol=1e-12)


def test_product_momentum_ignores_other_factor():
    rng = np.random.default_rng(11)
    a = random_state(rng, n=1, terms=3)
    b1, b2 = random_state(rng, n=1, terms=2), random_state(rng, n=1, terms=3)
    pa = per_particle_momentum(a, 0)
    n0 = pa / np.sqrt(minkowski_dot(pa, pa))
    for b in (b1, b2):
        pk = per_particle_momentum(a.tensor(b), 0)
        assert np.allclose(pk / np.sqrt(minkowski_dot(pk, pk)), n0, atol=1e-10)


def test_momentum_transforms_as_vector():
    rng = np.random.default_rng(12)
    psi = random_state(rng, n=2, terms=3)
    lam = boost_from_velocity([0.3, -0.2, 0.1])
    p = total_momentum(psi)
    pb = total_momentum(boost_wavefunction(psi, lam))
    n, nb = p / np.sqrt(minkowski_dot(p, p)), pb / np.sqrt(minkowski_dot(pb, pb))
    assert np.allclose(apply(lam, n), nb, atol=1e-10)


def test_degenerate_momenta_rejected():
    md = make_spinor([0.1, 0, 0], 1.0)
    psi = MultiTimeWaveFunction([(1, (md,)), (1j, (make_spinor([0.1, 0, 0], 1.0, "-"),))])
    with pytest.raises(DegenerateMomenta):
        total_momentum(psi)


def test_single_mode_energy_momentum_tensor_is_dust():
    p = np.array([0.2, -0.4, 0.1])
    md = make_spinor(p, 1.0)
    psi = MultiTimeWaveFunction([(1.0, (md,))])
    t = mass_density_field(psi, np.zeros(4))
    pp = np.outer(md.four_momentum, md.four_momentum)
    assert np.allclose(t / t[0, 0], pp / pp[0, 0], atol=1e-12)
