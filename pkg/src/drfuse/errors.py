"""Exception hierarchy shared by every drfuse module."""


class DRFuseError(Exception):
    """Base class for all library errors."""


class MissingFile(DRFuseError, FileNotFoundError):
    pass


class DecodeError(DRFuseError, ValueError):
    pass


class UnsupportedBitDepth(DecodeError):
    pass


class DimMismatch(DRFuseError, ValueError):
    pass


class NonSquareRotation(DRFuseError, ValueError):
    pass


class DuplicateRotation(DRFuseError, ValueError):
    pass


class MissingPrediction(DRFuseError, KeyError):
    pass


class ManifestError(DRFuseError, ValueError):
    pass


class LengthMismatch(DRFuseError, ValueError):
    pass


class WrongArity(DRFuseError, ValueError):
    pass


class IdMismatch(DRFuseError, ValueError):
    pass


class DuplicateId(DRFuseError, ValueError):
    pass


class EmptyMatrix(DRFuseError, ValueError):
    pass


class InconsistentConditionVector(DRFuseError, ValueError):
    pass


class DuplicateOutputId(DRFuseError, ValueError):
    pass
