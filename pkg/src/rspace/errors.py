"""Exception types raised across the package."""


class RSpaceError(Exception):
    """Base class for all package errors."""


class DimensionMismatch(RSpaceError, ValueError):
    pass


class AlgebraMismatch(RSpaceError, ValueError):
    pass


class UnsupportedAlgebra(RSpaceError, ValueError):
    pass


class NotASubalgebra(RSpaceError):
    pass


class NotParabolicHeightOne(RSpaceError):
    pass


class NotComplementary(RSpaceError):
    pass


class NotNilpotent(RSpaceError):
    pass


class NotInChart(RSpaceError):
    pass


class WrongConjugacyClass(RSpaceError):
    pass


class UnsupportedModel(RSpaceError, ValueError):
    pass


class NotPairwiseComplementary(RSpaceError):
    pass


class NotConcircular(RSpaceError):
    pass


class GridDimensionMismatch(RSpaceError, ValueError):
    pass


class PathDependence(RSpaceError):
    pass


class ComplementarityLost(RSpaceError):
    """A transformed field stopped being complementary to its partner.

    ``location`` holds the offending vertex index when known.
    """

    def __init__(self, message, location=None):
        super().__init__(message)
        self.location = location


class NotCartan(RSpaceError):
    pass


class DegenerateQuad(RSpaceError):
    pass


class PoleParameter(RSpaceError, ValueError):
    pass


class NotSelfDual(RSpaceError):
    pass


class VanishingLift(RSpaceError):
    pass


class BlowUp(RSpaceError):
    def __init__(self, message, location=None):
        super().__init__(message)
        self.location = location


class Instability(RSpaceError):
    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step
