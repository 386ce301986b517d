"""Exception hierarchy shared by all homogenlab modules."""


class HomogenLabError(Exception):
    """Base class for every error raised by the package."""


class InvalidDomain(HomogenLabError, ValueError):
    """Geometry inputs that cannot describe a perforated box."""


class UnresolvedSphere(HomogenLabError):
    """The grid is too coarse to see the inclusions.

    ``min_cells`` carries the smallest per-axis cell count that would
    resolve the sphere radius, so callers can suggest a fix.
    """

    def __init__(self, message, min_cells=None):
        super().__init__(message)
        self.min_cells = min_cells


class EmptyDomain(HomogenLabError):
    """No periodicity cell fits inside the box."""


class SolverError(HomogenLabError):
    """Base class for iterative solver failures."""


class MaxIterExceeded(SolverError):
    pass


class IndefiniteBreakdown(SolverError):
    """CG met a direction of non-positive curvature."""


class Stagnation(SolverError):
    """BiCGSTAB recurrence broke down (rho or omega vanished)."""


class NonFiniteCoefficient(HomogenLabError, FloatingPointError):
    pass


class PicardDiverged(SolverError):
    """Fixed-point residual grew for too many consecutive outer steps."""


class ZeroGamma(HomogenLabError, ZeroDivisionError):
    pass


class DomainError(HomogenLabError, ValueError):
    """Radii outside the admissible range of a radial formula."""


class SphereOutOfDomain(HomogenLabError, ValueError):
    pass


class ZeroGradient(HomogenLabError, ZeroDivisionError):
    """Inequality ratios are undefined for a field with no gradient energy."""


class GridMismatch(HomogenLabError, ValueError):
    pass


class ConfigError(HomogenLabError, ValueError):
    """Invalid run configuration; ``key`` names the offending field."""

    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key
