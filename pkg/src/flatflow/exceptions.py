"""Exception hierarchy shared by all flatflow modules."""


class FlatFlowError(Exception):
    """Base class for every error raised by flatflow."""


class GridError(FlatFlowError, ValueError):
    pass


class GridMismatchError(GridError):
    pass


class ShapeOutOfBoundsError(FlatFlowError, ValueError):
    pass


class NoContourError(FlatFlowError):
    pass


class TooFewVerticesError(FlatFlowError, ValueError):
    pass


class OpenContourError(FlatFlowError, ValueError):
    pass


class DegenerateSegmentError(FlatFlowError, ValueError):
    pass


class SelfIntersectionError(FlatFlowError, ValueError):
    pass


class OutsideTubeError(FlatFlowError):
    pass


class BoundaryStencilError(FlatFlowError):
    pass


class AmbiguousProjectionError(FlatFlowError):
    pass


class CoincidentPointsError(FlatFlowError, ValueError):
    pass


class NonConvergenceError(FlatFlowError):
    """Inner solver hit its iteration cap with the gap still above 10 * pd_tol."""


class GraphTooLargeError(FlatFlowError, ValueError):
    pass


class NotStarShapedError(FlatFlowError):
    pass


class ConfigError(FlatFlowError, ValueError):
    """Malformed run configuration. ``key`` names the offending entry."""

    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key
