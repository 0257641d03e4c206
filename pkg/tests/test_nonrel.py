import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from relbohm.dirac import MultiTimeWaveFunction, make_spinor
from relbohm.errors import MismatchedModeSets, NonPositiveMass
from relbohm.nonrel import (
    GaussianPacket,
    NRWaveFunction,
    galilean_boost,
    limit_probe,
    matched_nr,
    nonrel_limit_compare,
    nr_integrate,
    nr_is_solution,
    nr_transport,
    nr_velocity,
    relativistic_velocity,
    sample_born,
    schrodinger_residual,
)


def _packets():
    g1 = GaussianPacket(1.0, (0.1, 0, 0), (0.5, 0, 0), 0.8)
    g2 = GaussianPacket(1.0, (-1.0, 0.5, 0), (-0.2, 0.3, 0), 0.6)
    h1 = GaussianPacket(2.0, (3.0, 0, 0), (0.1, 0, 0.2), 1.0)
    return NRWaveFunction([(1.0, (g1, h1)), (0.5j, (g2, h1))])


def test_packets_solve_schrodinger():
    psi = _packets()
    x = np.array([[0.3, 0.2, -0.1], [2.5, 0.1, 0.0]])
    for t in (0.0, 0.7, 2.0):
        assert schrodinger_residual(psi, x, t) < 1e-6


@given(st.floats(-1, 1), st.floats(0.2, 2.0), st.floats(0.3, 2.0))
@settings(max_examples=10)
def test_single_packet_trajectory_matches_closed_form(p, m, sigma):
    g = GaussianPacket(m, (0.1, 0, 0), (p, 0.2, 0), sigma)
    psi = NRWaveFunction([(1.0, (g,))])
    x0 = np.array([0.4, -0.3, 0.2])
    h = nr_integrate(psi, x0[None], 0.0, 1.5, 1e-3)
    want = oracles.gaussian_bohm(x0, (0.1, 0, 0), (p, 0.2, 0), m, sigma, 1.5)
    assert np.allclose(h.x[-1, 0], want, atol=1e-9)


def test_plane_wave_velocity():
    g = GaussianPacket(2.0, (0, 0, 0), (0.4, -0.2, 0.6))
    psi = NRWaveFunction([(0.3, (g,))])
    assert np.allclose(nr_velocity(psi, 0.5, np.zeros((1, 3))), [[0.2, -0.1, 0.3]])


def test_galilean_boost_maps_solutions_to_solutions():
    psi = _packets()
    h = nr_integrate(psi, np.array([[0.2, 0.1, 0.0], [2.8, -0.2, 0.1]]), 0.0, 1.0, 1e-3)
    ok, diag = nr_is_solution(galilean_boost(h, [0.3, -0.1, 0.2]))
    assert ok, diag
    ok, diag = nr_is_solution(galilean_boost(h, [0.3, -0.1, 0.2], particles=[0]))
    assert ok, diag


def test_boost_of_positions_alone_is_not_a_solution():
    psi = _packets()
    h = nr_integrate(psi, np.array([[0.2, 0.1, 0.0], [2.8, -0.2, 0.1]]), 0.0, 1.0, 1e-3)
    bad = galilean_boost(h, [0.3, 0, 0])
    bad.psi = psi
    assert not nr_is_solution(bad)[0]


def test_boosts_compose():
    psi = _packets()
    h = nr_integrate(psi, np.array([[0.2, 0.1, 0.0], [2.8, -0.2, 0.1]]), 0.0, 0.5, 1e-2)
    a = galilean_boost(galilean_boost(h, [0.2, 0, 0]), [0, 0.1, 0])
    b = galilean_boost(h, [0.2, 0.1, 0])
    assert np.allclose(a.x, b.x)
    x = np.array([[0.0, 0.3, 0.1], [1.0, 0.0, 0.0]])
    assert np.allclose(a.psi.evaluate(x, 0.4), b.psi.evaluate(x, 0.4))


def test_velocities_match_independent_formulas():
    chi = np.array([1.0, 0.5j])
    terms = [(1.0, np.array([0.3, 0.1, 0.0]), 1.2, chi), (0.4 - 0.2j, np.array([-0.2, 0.0, 0.25]), 1.2, chi)]
    rel = MultiTimeWaveFunction([(c, (make_spinor(p, m, s),)) for c, p, m, s in terms])
    x = np.array([0.7, -0.4, 1.1])
    assert np.allclose(relativistic_velocity(rel, 0.0, x[None])[0], oracles.dirac_velocity(terms, x), atol=1e-13)
    assert np.allclose(nr_velocity(matched_nr(rel), 0.0, x[None])[0], oracles.plane_wave_velocity(terms, x), atol=1e-13)


def test_limit_discrepancy_shrinks_quadratically():
    small, large = limit_probe(0.05), limit_probe(0.1)
    assert small["relative"] <= 1.5 * 0.05**2
    assert large["relative"] <= 1.5 * 0.1**2
    assert 2.7 <= large["relative"] / small["relative"] <= 6.0


def test_mismatched_counterpart_rejected():
    rel = MultiTimeWaveFunction([(1.0, (make_spinor([0.1, 0, 0], 1.0),))])
    other = NRWaveFunction([(1.0, (GaussianPacket(1.0, (0, 0, 0), (0.2, 0, 0)),))])
    with pytest.raises(MismatchedModeSets):
        nonrel_limit_compare(rel, other, np.zeros((1, 1, 3)))


def test_packet_validation():
    with pytest.raises(NonPositiveMass):
        GaussianPacket(0.0, (0, 0, 0), (0, 0, 0))


def test_born_sampling_and_transport_are_worker_independent():
    psi = _packets()
    box = [[[-2, 2], [-1, 1], [0, 0]], [[1, 5], [-1, 1], [0, 0]]]
    a = sample_born(psi, 0.0, box, 300, seed=5, threads=1, scan_points=3000)
    b = sample_born(psi, 0.0, box, 300, seed=5, threads=2, scan_points=3000)
    assert np.array_equal(a, b)
    assert np.array_equal(nr_transport(psi, a, 0.0, 0.5, 1e-2), nr_transport(psi, a, 0.0, 0.5, 1e-2, threads=2))


def test_dict_round_trip():
    psi = _packets()
    again = NRWaveFunction.from_dict(psi.to_dict())
    x = np.array([[0.1, 0.0, 0.2], [3.0, 0.1, 0.0]])
    assert psi.evaluate(x, 0.3) == pytest.approx(again.evaluate(x, 0.3))
