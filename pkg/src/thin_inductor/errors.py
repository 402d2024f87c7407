"""Exception types raised by the package."""


class InductorError(Exception):
    """Base class for all errors raised by thin_inductor."""


class CurvatureVanishes(InductorError, ValueError):
    pass


class ToleranceNotReached(InductorError, RuntimeError):
    pass


class EpsilonOutOfRange(InductorError, ValueError):
    pass


class NonPositiveMetric(InductorError, ValueError):
    pass


class AmbiguousProjection(InductorError, ValueError):
    pass


class OnCutSurface(InductorError, ValueError):
    pass


class AxisSingularity(InductorError, ValueError):
    pass


class TooCloseToSurface(InductorError, ValueError):
    pass


class OffsetSelfIntersects(InductorError, ValueError):
    pass


class MeshBoundaryMismatch(InductorError, ValueError):
    pass


class MeshFormatError(InductorError, ValueError):
    pass


class OffsetUnstable(InductorError, RuntimeError):
    pass


class DegenerateFit(InductorError, ValueError):
    pass


class ConfigInvalid(InductorError, ValueError):
    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = list(diagnostics or [])


class StageFailed(InductorError, RuntimeError):
    pass
