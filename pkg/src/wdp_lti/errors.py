"""Exception types raised across the package."""


class WdpError(ValueError):
    """Base class for all domain errors."""


class NotSymmetric(WdpError):
    pass


class NotPsd(WdpError):
    pass


class DimensionMismatch(WdpError):
    pass


class SingularCovariance(WdpError):
    pass


class UnsupportedEpsilon(WdpError):
    """Raised when a calibration rule is asked for epsilon > 0."""


class ZeroNoise(WdpError):
    pass


class PublicStateMismatch(WdpError):
    """The public-initial-state rule was applied to pairs with different x0 laws."""
