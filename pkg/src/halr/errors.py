"""Exception types shared across the package."""


class HalrError(ValueError):
    """Base class for structured-matrix errors."""


class DimensionMismatch(HalrError):
    """Operand shapes do not line up."""


class IncompatibleClusters(HalrError):
    """Quad-tree clusters do not share a common refinement path."""


class FormatError(HalrError):
    """A matrix file is not valid HALR1 data."""


class AcaFailure(HalrError):
    """Cross approximation could not reach the requested tolerance."""


class BoxTouchesDiagonal(HalrError):
    """An off-diagonal block extraction was asked for a box meeting the diagonal."""


class SingularShift(HalrError):
    """A shifted banded solve hit an exactly singular pivot."""


class SpectralOverlap(HalrError):
    """Sylvester operands have (numerically) overlapping spectra."""
