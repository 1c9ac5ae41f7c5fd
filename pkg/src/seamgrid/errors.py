"""Exception types raised by seamgrid."""


class SeamgridError(Exception):
    """Base class for all library errors."""


class FieldFormatError(SeamgridError):
    """A binary field, delta or image file is malformed."""


class SceneError(SeamgridError):
    """A scene description failed validation."""


class EmptyRegionError(SeamgridError):
    """A boundary or interior sample set came out empty."""


class NonFiniteGradientError(SeamgridError):
    """The optimizer received NaN or infinite gradient entries."""


class ConvergenceError(SeamgridError):
    """An iterative solver did not reach its tolerance."""

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations
