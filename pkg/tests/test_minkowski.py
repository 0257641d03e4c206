import numpy as np
import pytest
from hypothesis import given

import oracles
from helpers import random_transform, seeds, velocities
from relbohm.errors import SpeedNotSubluminal, UnsupportedTransform
from relbohm.minkowski import (
    GAMMA,
    METRIC,
    LorentzTransform,
    apply,
    boost_from_velocity,
    compose,
    intertwining_residual,
    lower,
    minkowski_dot,
    pure_boost_to,
    rotation,
    spinor_rep_of,
    transform_from_spec,
    unit_timelike,
)


def test_gamma_matrices_match_independent_construction():
    assert np.allclose(GAMMA, oracles.gammas())


def test_clifford_algebra():
    for mu in range(4):
        for nu in range(4):
            anti = GAMMA[mu] @ GAMMA[nu] + GAMMA[nu] @ GAMMA[mu]
            assert np.allclose(anti, 2 * METRIC[mu, nu] * np.eye(4))


def test_dot_and_lower():
    a = np.array([2.0, 1.0, 0.5, -1.0])
    assert minkowski_dot(a, a) == pytest.approx(4 - 1 - 0.25 - 1)
    assert np.allclose(lower(a), [2.0, -1.0, -0.5, 1.0])


def test_boost_along_x_matches_rapidity_form():
    v = 0.6
    lam = boost_from_velocity([v, 0, 0])
    assert np.allclose(lam.matrix, oracles.boost_x(np.arctanh(v)), atol=1e-14)


def test_rotation_about_z_matches_closed_form():
    lam = rotation([0, 0, 1], 0.7)
    assert np.allclose(lam.matrix, oracles.rotation_z(0.7), atol=1e-14)


@given(seeds)
def test_random_transforms_preserve_metric_and_intertwine(seed):
    lam = random_transform(np.random.default_rng(seed))
    assert np.max(np.abs(lam.matrix.T @ METRIC @ lam.matrix - METRIC)) < 1e-12
    assert spinor_rep_of(lam).intertwining_residual(lam) < 1e-10


@given(velocities, velocities)
def test_composition_of_representatives(v1, v2):
    a, b = boost_from_velocity(v1), boost_from_velocity(v2)
    ab = a @ b
    d = spinor_rep_of(a).d_lambda @ spinor_rep_of(b).d_lambda
    assert np.allclose(spinor_rep_of(ab).d_lambda, d, atol=1e-12)
    assert intertwining_residual(d, ab.matrix) < 1e-10


@given(seeds)
def test_inverse(seed):
    lam = random_transform(np.random.default_rng(seed))
    inv = lam.inverse()
    assert np.allclose(lam.matrix @ inv.matrix, np.eye(4), atol=1e-12)
    assert np.allclose(spinor_rep_of(lam).d_lambda @ spinor_rep_of(inv).d_lambda, np.eye(4), atol=1e-12)


def test_full_turn_is_minus_identity_on_spinors():
    lam = rotation([0, 1, 0], 2 * np.pi)
    assert np.allclose(lam.matrix, np.eye(4), atol=1e-12)
    assert np.allclose(spinor_rep_of(lam).d_lambda, -np.eye(4), atol=1e-12)


def test_superluminal_velocity_rejected():
    with pytest.raises(SpeedNotSubluminal):
        boost_from_velocity([0.8, 0.6, 0.0])


def test_bare_matrix_recognized_or_rejected():
    m = boost_from_velocity([0.3, 0, 0]).matrix
    assert spinor_rep_of(LorentzTransform(m)).intertwining_residual(LorentzTransform(m)) < 1e-12
    mixed = compose(boost_from_velocity([0.3, 0, 0]), rotation([0, 0, 1], 0.4)).matrix
    with pytest.raises(UnsupportedTransform):
        spinor_rep_of(LorentzTransform(mixed))
    with pytest.raises(UnsupportedTransform):
        LorentzTransform(np.diag([1.0, -1.0, 1.0, 1.0]))
    with pytest.raises(UnsupportedTransform):
        LorentzTransform(2 * np.eye(4))


def test_spec_list_composes_left_to_right():
    spec = [{"boost": [0.2, 0, 0]}, {"rotation": {"axis": [0, 0, 1], "angle": 0.5}}]
    lam = transform_from_spec(spec)
    want = boost_from_velocity([0.2, 0, 0]).matrix @ rotation([0, 0, 1], 0.5).matrix
    assert np.allclose(lam.matrix, want)
    again = transform_from_spec(lam.to_dict())
    assert np.allclose(again.matrix, lam.matrix)


@given(velocities)
def test_pure_boost_to(v):
    n = unit_timelike(np.concatenate([[1.0], v]))
    lam = pure_boost_to(n)
    assert np.allclose(apply(lam, [1.0, 0, 0, 0]), n, atol=1e-12)
