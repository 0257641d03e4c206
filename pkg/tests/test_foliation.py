import numpy as np
import pytest

from relbohm.dirac import MultiTimeWaveFunction, make_spinor
from relbohm.errors import CausticEncountered, NonTimelikeNormal, OutOfRegion, ValidationError
from relbohm.foliation import (
    Distance,
    Flat,
    Gradient,
    Leaf,
    Momentum,
    PerParticle,
    Region,
    Regional,
    advance_leaf,
    curl_residual,
    foliation_from_spec,
    frobenius_residual,
    normal_constancy_residual,
    spacelike_check,
)
from relbohm.minkowski import apply, boost_from_velocity, minkowski_dot, unit_timelike

RNG = np.random.default_rng(2024)
GRID = np.arange(-4.0, 7.01, 0.25)


def _points(count, spread=1.0, t=0.3):
    p = RNG.uniform(-spread, spread, (count, 4))
    p[:, 0] = t + 0.1 * p[:, 0]
    return p


def test_flat_label_normal_and_transform():
    n = unit_timelike([1.0, 0.2, -0.1, 0.0])
    fol = Flat(n)
    x = _points(5)
    assert np.allclose(fol.label(x), minkowski_dot(n, x))
    assert np.allclose(fol.normal(x), n)
    lam = boost_from_velocity([0.3, 0.0, 0.4])
    moved = fol.transformed(lam)
    assert np.allclose(moved.label(apply(lam, x)), fol.label(x))


def test_non_timelike_rejected():
    with pytest.raises(NonTimelikeNormal):
        Flat([0.0, 1.0, 0.0, 0.0])
    with pytest.raises(NonTimelikeNormal):
        Gradient("x").normal(np.zeros(4))


def test_gradient_normal_and_integrability():
    fol = Gradient("t + 0.15*sin(x)*cos(0.5*y) - 0.05*z")
    x = _points(20)
    g = fol.label_gradient(x)
    n = fol.normal(x)
    assert np.allclose(minkowski_dot(n, n), 1.0)
    assert np.allclose(n * np.array([1, -1, -1, -1]) / g, (n[:, :1] / g[:, :1]))
    assert frobenius_residual(fol.normal, x) < 1e-6
    assert curl_residual(fol.normal, x) > 1e-3


def test_gradient_transform_is_pushforward():
    fol = Gradient("t - 0.1*x**2 + 0.05*y")
    lam = boost_from_velocity([0.2, 0.1, 0.0])
    x = _points(8)
    assert np.allclose(fol.transformed(lam).label(apply(lam, x)), fol.label(x))
    assert np.allclose(fol.transformed(lam).normal(apply(lam, x)), apply(lam, fol.normal(x)))


def test_distance_from_tilted_plane_is_hyperplane_label():
    slope, t0 = 0.3, 0.1
    fol = Distance({"x": GRID}, slope * GRID + t0)
    n = np.array([1.0, slope, 0, 0]) / np.sqrt(1 - slope**2)
    x = _points(10, t=0.5)
    want = minkowski_dot(n, x - np.array([t0, 0, 0, 0]))
    assert np.allclose(fol.label(x), want, atol=1e-12)
    assert np.allclose(fol.normal(x), n, atol=1e-12)


def test_distance_labels_are_proper_distance_along_normals():
    fol = Distance({"x": GRID}, 0.2 * np.sin(0.8 * GRID))
    xi = np.array([[0.3, 0.0, 0.0], [1.7, 0.4, -0.2]])
    f = 0.2 * np.sin(0.8 * xi[:, 0])
    fp = 0.16 * np.cos(0.8 * xi[:, 0])
    w = np.sqrt(1 - fp**2)
    n = np.stack([1 / w, fp / w, 0 * w, 0 * w], axis=1)
    s = np.array([0.4, 0.9])
    y = np.concatenate([f[:, None], xi], axis=1) + s[:, None] * n
    assert np.allclose(fol.label(y), s, atol=1e-11)
    assert np.allclose(fol.normal(y), n, atol=1e-10)
    assert curl_residual(fol.normal, y) < 1e-5
    assert frobenius_residual(fol.normal, y) < 1e-5


def _parabola_focal(grid, c):
    # (1 - f'^2)^(3/2) / (-f'') for f = -c x^2 / 2
    return float(np.min((1 - (c * grid) ** 2) ** 1.5 / c))


def test_focal_distance_of_parabola():
    c = 0.025
    fol = Distance({"x": GRID}, -0.5 * c * GRID**2)
    assert fol.focal_distance() == pytest.approx(_parabola_focal(GRID, c), rel=1e-6)


def test_points_beyond_focus_and_outside_grid():
    grid = np.linspace(-1.5, 1.5, 31)
    fol = Distance({"x": grid}, -0.25 * grid**2)
    assert fol.focal_distance() == pytest.approx(_parabola_focal(grid, 0.5), rel=1e-6)
    with pytest.raises(CausticEncountered):
        fol.label(np.array([2.5, 0.0, 0.0, 0.0]))
    with pytest.raises(OutOfRegion):
        fol.label(np.array([0.0, 3.0, 0.0, 0.0]))


def test_distance_rejects_non_spacelike_initial_leaf():
    with pytest.raises(ValidationError):
        Distance({"x": GRID}, 1.2 * GRID)


def test_two_dimensional_grid():
    gx, gy = np.linspace(-2, 2, 21), np.linspace(-2, 2, 21)
    fol = Distance.from_function(lambda x, y: 0.1 * np.sin(x) * np.cos(y), {"x": gx, "y": gy})
    y = np.array([[0.3, 0.2, -0.1, 0.5], [0.6, -0.4, 0.3, 0.0]])
    n = fol.normal(y)
    assert np.allclose(minkowski_dot(n, n), 1.0)
    assert curl_residual(fol.normal, y) < 1e-5


def test_distance_transform_is_pushforward():
    fol = Distance({"x": GRID}, 0.2 * np.sin(0.8 * GRID))
    lam = boost_from_velocity([0.25, 0.1, 0.0])
    x = _points(6, spread=1.0, t=0.4)
    assert np.allclose(fol.transformed(lam).label(apply(lam, x)), fol.label(x), atol=1e-11)


def test_advanced_leaf_stays_spacelike_and_on_label():
    fol = Distance({"x": GRID}, 0.2 * np.sin(0.8 * GRID))
    leaf = advance_leaf(fol, Leaf(fol, 0, 0.0), 0.5)
    assert spacelike_check(leaf) < 0
    inner = leaf.points[np.abs(leaf.points[:, 1] - 1.5) < 4]
    assert np.allclose(fol.label(inner), 0.5, atol=1e-10)


def test_advance_leaf_detects_caustic():
    grid = np.linspace(-1.5, 1.5, 31)
    fol = Distance({"x": grid}, -0.25 * grid**2)
    with pytest.raises(CausticEncountered):
        advance_leaf(fol, 0.0, 2.5)


def test_momentum_and_per_particle_are_constant():
    a = make_spinor([0.3, 0, 0.1], 1.0)
    b = make_spinor([-0.2, 0.25, 0], 1.0, "-")
    c = make_spinor([0.1, -0.2, 0.15], 1.0)
    psi = MultiTimeWaveFunction([(1, (a, b)), (0.6j, (c, a))])
    x = _points(10, spread=3)
    assert normal_constancy_residual(Momentum(psi), x) == 0.0
    pp = PerParticle(psi)
    assert normal_constancy_residual(pp, x, 1) == 0.0
    assert not np.allclose(pp.normal_of(0), pp.normal_of(1))


def test_regional_dispatch():
    left = Flat([1.0, 0, 0, 0])
    right = Gradient("t + 0.1*x")
    fol = Regional([(Region((0, 1, 0, 0), 0.0), left)], right)
    x = np.array([[0.2, -1.0, 0, 0], [0.2, 1.0, 0, 0]])
    assert np.allclose(fol.label(x), [0.2, 0.3])
    assert np.allclose(fol.normal(x)[0], [1, 0, 0, 0])
    lam = boost_from_velocity([0.0, 0.3, 0.0])
    assert np.allclose(fol.transformed(lam).label(apply(lam, x)), fol.label(x))


@pytest.mark.parametrize(
    "spec",
    [
        {"kind": "flat", "normal": [1.0, 0.1, 0.0, 0.0]},
        {"kind": "gradient", "field": "t + 0.1*sin(x)", "transform": {"boost": [0.1, 0, 0]}},
        {"kind": "distance", "grid": {"x": GRID.tolist()}, "values": (0.1 * np.cos(GRID)).tolist()},
        {
            "kind": "regional",
            "pieces": [{"region": {"covector": [0, 1, 0, 0], "offset": 2.0}, "foliation": {"kind": "flat"}}],
            "default": {"kind": "gradient", "field": "t - 0.05*x"},
        },
    ],
)
def test_spec_round_trip(spec):
    fol = foliation_from_spec(spec)
    again = foliation_from_spec(fol.to_dict())
    x = _points(5)
    assert np.allclose(fol.label(x), again.label(x))
