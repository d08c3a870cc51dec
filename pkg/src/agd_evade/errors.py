"""Exception hierarchy.

Every error carries an ``exit_code`` so the CLI can map failures onto its
stable contract: 2 for bad configuration/input, 3 for I/O, 4 for numeric
failure.
"""


class AgdError(Exception):
    exit_code = 2


class ConfigError(AgdError):
    exit_code = 2


# domain codec
class InvalidCharacter(AgdError, ValueError):
    pass


class TooLong(AgdError, ValueError):
    pass


class EmptyDomain(AgdError, ValueError):
    pass


class NotOneHot(AgdError, ValueError):
    pass


class NoDot(AgdError, ValueError):
    pass


class EmptyLabel(AgdError, ValueError):
    pass


# corpus
class ExhaustedSpace(AgdError):
    pass


class IoFailure(AgdError, OSError):
    exit_code = 3


class EmptyResult(AgdError):
    pass


class InsufficientData(AgdError):
    pass


# neural core
class ShapeMismatch(AgdError, ValueError):
    pass


class BadIndex(AgdError, IndexError):
    pass


class StaleActivations(AgdError):
    pass


class EmptyCorpus(AgdError):
    pass


class UnknownLabel(AgdError, KeyError):
    def __str__(self):
        return Exception.__str__(self)


class NonPositiveTemperature(AgdError, ValueError):
    pass


class VersionMismatch(AgdError):
    exit_code = 3


class ChecksumMismatch(AgdError):
    exit_code = 3


class TrainingDiverged(AgdError, FloatingPointError):
    exit_code = 4


# models
class BadShape(AgdError, ValueError):
    pass


class UnknownArchitecture(AgdError, ValueError):
    pass


# attack
class ModelInputMismatch(AgdError, ValueError):
    pass


class TooShort(AgdError, ValueError):
    pass


# defense / evaluation
class FamilyTooSmall(AgdError):
    pass


class MisalignedReports(AgdError, ValueError):
    pass


class StageFailure(AgdError):
    """Wraps an error raised inside one stage of the experiment runner."""

    def __init__(self, stage, cause):
        self.stage = stage
        self.cause = cause
        self.exit_code = getattr(cause, "exit_code", 2)
        super().__init__(f"[{stage}] {type(cause).__name__}: {cause}")
