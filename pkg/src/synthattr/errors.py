"""Exception hierarchy.

Every error raised by the toolkit derives from one of three families so the
CLI can map failures onto stable exit codes (config=2, data=3, numeric=4).
"""


class SynthAttrError(Exception):
    exit_code = 1


class ConfigError(SynthAttrError, ValueError):
    exit_code = 2


class DataError(SynthAttrError, ValueError):
    exit_code = 3


class NumericError(SynthAttrError, ArithmeticError):
    exit_code = 4


# audio
class NotWav(DataError):
    pass


class UnsupportedEncoding(DataError):
    pass


class EmptyPayload(DataError):
    pass


class EmptyClip(DataError):
    pass


class SilentClip(DataError):
    pass


class BandwidthAboveNyquist(ConfigError):
    pass


# features
class ClipTooShort(DataError):
    pass


class BadBandEdges(ConfigError):
    pass


class TooFewFrames(DataError):
    pass


# nn
class ShapeMismatch(ConfigError):
    pass


class DegenerateBatch(DataError):
    pass


class WindowLargerThanLength(ConfigError):
    pass


class TargetOutOfRange(DataError):
    pass


class NonFiniteGradient(NumericError):
    pass


class NonFiniteLoss(NumericError):
    pass


class NonFiniteFunctionValue(NumericError):
    pass


class ConfigInvalid(ConfigError):
    pass


class CheckpointMismatch(ConfigError):
    pass


# classical models
class SingleClassData(DataError):
    pass


class DimensionMismatch(DataError):
    pass


class TooFewSamples(DataError):
    pass


# analysis
class PerplexityTooLarge(ConfigError):
    pass


class SingleClass(DataError):
    pass


# pipeline
class ClassTooSmall(DataError):
    pass


class IoFailure(DataError):
    pass


class EmptySplit(DataError):
    pass


class MissingFile(DataError):
    pass


class DegenerateDataWarning(UserWarning):
    pass


class RankDeficient(UserWarning):
    """Fewer positive eigenvalues than requested components."""
