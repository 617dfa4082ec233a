"""Exception hierarchy.

Every error raised by the toolkit derives from :class:`EcgxError`. The three
intermediate classes map onto CLI exit codes: usage problems exit with 2,
data problems with 3 and model problems with 4.
"""


class EcgxError(Exception):
    exit_code = 1


class UsageError(EcgxError):
    exit_code = 2


class DataError(EcgxError, ValueError):
    exit_code = 3


class ModelError(EcgxError, ValueError):
    exit_code = 4


# signal
class UnsupportedRate(DataError):
    pass


class EmptySignal(DataError):
    pass


class InvalidSpec(DataError):
    pass


class RateMismatch(DataError):
    pass


class FlatLead(DataError):
    pass


# segmentation
class LeadMissing(DataError):
    pass


class EmptyInput(DataError):
    pass


# nn / models
class ShapeMismatch(ModelError):
    pass


class BatchTooSmall(ModelError):
    pass


class EmptyDataset(ModelError):
    pass


class LeadCountMismatch(ModelError):
    pass


class DimensionMismatch(ModelError):
    pass


# protocol
class TooFewSubjects(DataError):
    pass


class InsufficientSummaries(DataError):
    pass


class EmptyAfterExclusion(DataError):
    pass


class NoSummaries(DataError):
    pass


class MissingSession(DataError):
    pass


# metrics
class EmptyScores(DataError):
    pass


class LengthMismatch(DataError):
    pass


# dataset / persistence
class ManifestInvalid(DataError):
    pass


class RecordUnreadable(DataError):
    pass


class LeadMismatch(DataError):
    pass


class InvalidParams(DataError):
    pass


class ChecksumMismatch(ModelError):
    pass


class VersionUnsupported(ModelError):
    pass
