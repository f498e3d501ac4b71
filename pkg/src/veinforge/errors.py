"""Exception hierarchy shared by every veinforge module."""


class VeinForgeError(Exception):
    """Base class for all library errors."""


# raster / file formats
class MissingFile(VeinForgeError):
    pass


class MalformedHeader(VeinForgeError):
    pass


class UnsupportedFormat(VeinForgeError):
    pass


class TruncatedPayload(VeinForgeError):
    pass


class IoFailure(VeinForgeError):
    pass


class CoordinateOutOfBounds(VeinForgeError):
    def __init__(self, coord, width, height):
        self.coord = coord
        super().__init__(f"coordinate {coord} outside {width}x{height} raster")


# preprocessing
class NoContrast(VeinForgeError):
    pass


class WindowTooLarge(VeinForgeError):
    pass


# linear algebra
class NonFinite(VeinForgeError):
    pass


class NotPSD(VeinForgeError):
    pass


# vein space
class DimensionMismatch(VeinForgeError):
    pass


class EmptyCoordinateList(VeinForgeError):
    pass


class InsufficientCoordinates(VeinForgeError):
    pass


class InsufficientSamples(VeinForgeError):
    pass


class AllZeroSpectrum(VeinForgeError):
    pass


# matching
class EmptyModel(VeinForgeError):
    pass


class UnknownLabel(VeinForgeError):
    pass


class BothEmpty(VeinForgeError):
    pass


# evaluation
class NoAttempts(VeinForgeError):
    pass


class EmptyScoreList(VeinForgeError):
    pass


class ProtocolViolation(VeinForgeError):
    pass


class InsufficientData(VeinForgeError):
    pass


# model files
class BadMagic(VeinForgeError):
    pass


class UnsupportedVersion(VeinForgeError):
    pass


class CorruptLength(VeinForgeError):
    pass
