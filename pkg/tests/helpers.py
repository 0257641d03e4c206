"""Random states and transforms shared by the test modules."""
import numpy as np
from hypothesis import strategies as st

from relbohm.dirac import MultiTimeWaveFunction, make_spinor
from relbohm.minkowski import boost_from_velocity, compose, rotation


def random_mode(rng, mass=None, pmax=1.5):
    m = float(rng.uniform(0.3, 3.0)) if mass is None else mass
    chi = rng.normal(size=2) + 1j * rng.normal(size=2)
    return make_spinor(rng.uniform(-pmax, pmax, 3), m, chi)


def random_state(rng, n=None, terms=None, pmax=1.5):
    """Up to three particles, up to four terms, masses fixed per slot."""
    n = int(rng.integers(1, 4)) if n is None else n
    terms = int(rng.integers(1, 5)) if terms is None else terms
    masses = rng.uniform(0.3, 3.0, n)
    out = []
    for _ in range(terms):
        c = complex(rng.normal(), rng.normal())
        out.append((c, tuple(random_mode(rng, masses[k], pmax) for k in range(n))))
    return MultiTimeWaveFunction(out)


def random_transform(rng, vmax=0.9):
    v = rng.normal(size=3)
    v *= rng.uniform(0, vmax) / np.linalg.norm(v)
    r = rotation(rng.normal(size=3), rng.uniform(-np.pi, np.pi))
    choice = int(rng.integers(3))
    b = boost_from_velocity(v)
    return (b, r, compose(b, r))[choice]


def random_unit_timelike(rng, shape=(), vmax=0.9):
    v = rng.normal(size=shape + (3,))
    v *= (rng.uniform(0, vmax, shape) / np.linalg.norm(v, axis=-1))[..., None]
    g = 1.0 / np.sqrt(1.0 - np.sum(v * v, axis=-1))
    return np.concatenate([g[..., None], g[..., None] * v], axis=-1)


seeds = st.integers(min_value=0, max_value=2**32 - 1)
velocities = st.tuples(*[st.floats(-0.55, 0.55)] * 3)
