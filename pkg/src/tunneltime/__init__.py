"""Numerical laboratory for quantum traversal times.

Modules
-------
model       potentials, regions, grids
scatter     stationary scattering amplitudes with the lambda shift
ctime       complex, dwell and SWP times from lambda derivatives
evolve      split-operator propagation and conditioned states
taudist     traversal-time amplitude distributions
clock       spin-j clock coupled to the particle
ionise      tunnel-ionisation model
experiments reference experiments behind the presets
cli         command line front end
"""

from . import clock, ctime, evolve, experiments, ionise, model, scatter, taudist
from .errors import DomainTooSmallError, NumericalDomainError, PostSelectionError, SchemaError, TunnelTimeError

__version__ = "0.1.0"

__all__ = [
    "model",
    "scatter",
    "ctime",
    "evolve",
    "taudist",
    "clock",
    "ionise",
    "experiments",
    "TunnelTimeError",
    "SchemaError",
    "NumericalDomainError",
    "DomainTooSmallError",
    "PostSelectionError",
]
