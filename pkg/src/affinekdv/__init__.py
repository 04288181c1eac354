"""Planar central affine curve flows and the KdV hierarchy behind them.

Modules:
  diffpoly    exact differential-polynomial algebra in one unknown
  hierarchy   recursion table, flows, Hamiltonians, Lax pairs, Poisson pair
  numerics    spectral kernels, matrix RK4, exponential time stepping
  geometry    arclength normalization, curvature, reconstruction, holonomy
  flows       Cauchy solvers for curvature and curve evolution
  backlund    Backlund transformations, permutability, soliton catalog
  hamiltonian pairings, conserved functionals, gradient checks
  verify      the pinned acceptance checks behind `affinekdv verify`
"""

__version__ = "0.1.0"

from .diffpoly import DiffPoly
from .errors import (
    AffineKdvError,
    CflError,
    CoincidentFactors,
    DegenerateCurve,
    DriftError,
    MeanNotZero,
    NotExactDerivative,
    NotNormalized,
    OpenCurve,
    ResolutionError,
    SingularBT,
    StepSizeRejected,
)
from .geometry import CurvatureField, PlaneCurve, TangentField
from .numerics import Grid, Mat2Path

__all__ = [
    "DiffPoly",
    "Grid",
    "Mat2Path",
    "PlaneCurve",
    "CurvatureField",
    "TangentField",
    "AffineKdvError",
    "NotExactDerivative",
    "MeanNotZero",
    "ResolutionError",
    "CflError",
    "StepSizeRejected",
    "DegenerateCurve",
    "NotNormalized",
    "DriftError",
    "SingularBT",
    "CoincidentFactors",
    "OpenCurve",
    "__version__",
]
