class CVEError(Exception):
    """Base class for estimator errors."""


class InvalidDimensionError(CVEError, ValueError):
    pass


class InvalidArgumentError(CVEError, ValueError):
    pass


class DegenerateSliceError(CVEError, FloatingPointError):
    """All kernel weights of a slice underflowed; the bandwidth is too small."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class DegenerateDataError(CVEError, ValueError):
    pass


class UnsupportedKernelError(CVEError, ValueError):
    pass
