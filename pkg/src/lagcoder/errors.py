"""Exception hierarchy shared across the package.

Soft failure modes (rank-deficient PCA, zero-variance correlations, ...) are
reported through flags or NaN sentinels, not exceptions; only contract
violations raise.
"""


class LagcoderError(Exception):
    """Base class for all package errors."""


# bundle I/O
class MissingFile(LagcoderError):
    pass


class ShapeMismatch(LagcoderError):
    pass


class NonMonotonicOnsets(LagcoderError):
    pass


class NonFiniteValue(LagcoderError):
    pass


class IoFailure(LagcoderError):
    pass


class ChecksumMismatch(IoFailure):
    pass


class MissingRank(LagcoderError):
    pass


# signal preprocessing
class AllSpikes(LagcoderError):
    pass


class TooFewElectrodes(LagcoderError):
    pass


class NyquistViolation(LagcoderError):
    pass


class EmptyBand(LagcoderError):
    pass


# embeddings
class PoolTooSmall(LagcoderError):
    pass


# encoding
class EmptyRoi(LagcoderError):
    pass


class NoPositivePeak(LagcoderError):
    pass


class AllNaNRow(LagcoderError):
    pass


# stats
class OutOfRange(LagcoderError):
    pass


class TooFewPairs(LagcoderError):
    pass


class DegenerateGroup(LagcoderError):
    pass


# synthesis / controls
class GridOverflow(LagcoderError):
    pass


# plotting
class DimensionMismatch(LagcoderError):
    pass


class StageError(LagcoderError):
    """Pipeline stage failure; carries the stage name for diagnostics."""

    def __init__(self, stage, message):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage
