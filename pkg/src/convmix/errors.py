"""Exception types shared across the package.

Every failure mode that callers are expected to catch gets its own class;
everything inherits from ConvmixError so CLI entry points can map library
failures to exit codes in one place.
"""


class ConvmixError(Exception):
    """Base class for all library errors."""


# --- dataset / graph construction -----------------------------------------

class MissingFile(ConvmixError):
    pass


class FormatError(ConvmixError):
    """Malformed line or field in an on-disk dataset file."""


class ShapeMismatch(ConvmixError):
    pass


class SelfLoop(ConvmixError):
    pass


class DuplicateEdge(ConvmixError):
    pass


class IndexOutOfRange(ConvmixError):
    pass


class UnlabeledEndpoint(ConvmixError):
    pass


class EmptyEdgeSet(ConvmixError):
    pass


# --- numerics / optimization -----------------------------------------------

class NonFiniteGradient(ConvmixError):
    pass


class NonFiniteLoss(ConvmixError):
    """Raised mid-training; carries the epoch at which the loss went bad."""

    def __init__(self, message, epoch=None):
        super().__init__(message)
        self.epoch = epoch


class LengthMismatch(ConvmixError):
    pass


class DegenerateInput(ConvmixError):
    pass


# --- clustering / pairs ------------------------------------------------------

class DegenerateClustering(ConvmixError):
    pass


class ComplementEmpty(ConvmixError):
    pass


class EmptyPairSet(ConvmixError):
    pass


class DegenerateLabels(ConvmixError):
    pass


class EmptyInput(ConvmixError):
    pass


class EmptySplit(ConvmixError):
    pass


# --- synthetic graph generation ----------------------------------------------

class InfeasibleDegreeSequence(ConvmixError):
    pass


class RetriesExhausted(ConvmixError):
    pass


# --- CLI ----------------------------------------------------------------------

class InvalidArgument(ConvmixError):
    pass
