"""
Errors for Phonalign
====================

One exception hierarchy for the whole library. Every error raised on purpose by
phonalign derives from `PhonalignError`, so callers (the CLI in particular) can
catch the family with a single clause.
"""


class PhonalignError(Exception):
    """Base class for all phonalign errors."""


class ShapeError(PhonalignError, ValueError):
    """Array shapes or lengths do not agree."""


class NonFiniteError(PhonalignError, ValueError):
    """A NaN or infinity showed up where finite numbers are required."""


class CTCInfeasibleError(PhonalignError):
    """
    The label sequence cannot be emitted in the available number of frames.

    Attributes:
        frames (int): Number of frames T in the input.
        required (int): Minimum T for the labels (length plus blanks between repeats).
    """

    def __init__(self, frames: int, required: int):
        self.frames = frames
        self.required = required
        super().__init__(
            f"CTC infeasible: T={frames} frames, labels need at least {required}")


class InstanceTooLargeError(PhonalignError):
    """A brute-force enumeration would exceed its guard."""


class ConfigError(PhonalignError, ValueError):
    """A configuration is invalid or inconsistent."""


class MissingInputError(PhonalignError):
    """A loss term is enabled but one of its inputs was not supplied."""


class CheckpointFormatError(PhonalignError):
    """A binary array container could not be read."""


class UnknownWordError(PhonalignError, KeyError):
    """A word is not present in the lexicon."""


class EmptySubsetError(PhonalignError):
    """A metric was requested over an empty subset of utterances."""
