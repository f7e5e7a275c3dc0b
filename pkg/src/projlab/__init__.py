"""Discrete Sinjukov and Eisenhart operators on the flat torus and the round sphere.

Submodules
----------
geometry    grids, metrics, Christoffel symbols, curvature
fields      tensor fields, inner products, random band-limited fields
operators   sparse covariant derivatives, S, E, their adjoints and normal operators
symbols     principal symbols and injectivity certificates
spectral    eigen-solvers, kernel counting, reference spectra, Fourier oracle
projective  metric reconstruction from kernel tensors and geodesic checks
cli         command-line experiment runner
"""
__version__ = "0.1.0"

from .errors import (  # noqa: F401
    DegeneratePlane,
    DegenerateTensor,
    GridError,
    InvalidCurve,
    InvalidField,
    InvalidMetric,
    NonIntegrable,
    PoleProximity,
    ProjlabError,
    SolverError,
    ValenceMismatch,
)
from .geometry import ManifoldGrid, build_flat_torus, build_round_sphere  # noqa: F401
