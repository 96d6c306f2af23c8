"""Exception types raised across the package.

Every failure that the pipeline knows how to recover from has its own class so
callers can catch exactly the fallback they implement.
"""


class TradeError(Exception):
    """Base class for all package errors."""


# geometry
class PointBehindCamera(TradeError):
    pass


class NonPositiveInverseDepth(TradeError):
    pass


class DegenerateBaseline(TradeError):
    pass


class RayParallel(TradeError):
    pass


class NegativeRange(TradeError):
    pass


# roi tracking
class RoiOutsideImage(TradeError):
    pass


# scale recovery
class DegenerateSamples(TradeError):
    pass


class NoValidSample(TradeError):
    pass


# segmentation
class EmptyBox(TradeError):
    pass


class NoSeed(TradeError):
    pass


class SegmentationFailed(TradeError):
    pass


# plane fitting
class CollinearPoints(TradeError):
    pass


class InsufficientPoints(TradeError):
    pass


class NoIntersection(TradeError):
    pass


# localization / trajectory / peak selection
class LocalizationFailed(TradeError):
    pass


class PredictionBehindCamera(TradeError):
    pass


class NoCandidates(TradeError):
    pass


# simulator / config
class OutOfDomain(TradeError):
    pass


class ConfigError(TradeError):
    """Invalid configuration; message carries file/line diagnostics when known."""
