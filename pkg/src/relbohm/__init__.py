"""Bohmian trajectories for free multi-time Dirac wave functions."""
from .dirac import MultiTimeWaveFunction, PlaneWaveMode, make_spinor
from .minkowski import LorentzTransform, boost_from_velocity, rotation

__all__ = [
    "LorentzTransform",
    "MultiTimeWaveFunction",
    "PlaneWaveMode",
    "boost_from_velocity",
    "make_spinor",
    "rotation",
]
