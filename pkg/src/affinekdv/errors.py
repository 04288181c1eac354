"""Exception types shared across the package."""


class AffineKdvError(Exception):
    """Base class for all package-specific failures."""


class NotExactDerivative(AffineKdvError):
    """Formal antiderivative requested for an input that is not one."""


class MeanNotZero(AffineKdvError):
    """Zero-mean precondition on a periodic field failed."""


class ResolutionError(AffineKdvError):
    """Grid too coarse for the requested spectral operation."""


class CflError(AffineKdvError):
    """Requested time step exceeds the stability bound."""


class StepSizeRejected(AffineKdvError):
    """Matrix integration lost unimodularity beyond the per-step tolerance."""


class DegenerateCurve(AffineKdvError):
    """det(curve, tangent) vanishes; no central affine arclength exists."""


class NotNormalized(AffineKdvError):
    """Curve is not parametrized by central affine arclength."""


class DriftError(AffineKdvError):
    """An evolution lost the unit-determinant normalization."""


class SingularBT(AffineKdvError):
    """A Backlund transformation hit a zero of its denominator."""


class CoincidentFactors(AffineKdvError):
    """Permutability composition would divide by xi1 - xi2 = 0."""


class OpenCurve(AffineKdvError):
    """Operation requires a closed curve."""
