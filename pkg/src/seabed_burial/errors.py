"""Typed failures raised across the pipeline."""


class BurialError(Exception):
    """Base class for every error the package raises on purpose."""


class ParseError(BurialError):
    pass


class MissingFile(ParseError):
    pass


class ValidationError(BurialError, ValueError):
    pass


class NonPositiveDepth(BurialError, ValueError):
    """A point handed to the pinhole model lies on or behind the camera plane."""


class DimensionMismatch(ValidationError):
    pass


class NoMaskedViews(ValidationError):
    pass


class DegenerateCameras(BurialError):
    """All camera centres coincide, so the scale objective is flat."""


class NoConsensus(BurialError):
    pass


class EmptyCloud(BurialError):
    pass


class AllPointsRejected(BurialError):
    pass


class DegenerateAverage(BurialError):
    pass


class DegenerateGeometry(BurialError):
    pass


class IdMismatch(ValidationError):
    pass


class InvalidYears(ValidationError):
    pass
