"""
Semantic Conventions for Phonalign
==================================

Defines standardized names for report columns, run-log events and span
attributes, so reports, structured logs and tests agree on one vocabulary.
"""

from typing import List


class ReportColumns:
    """Column names of one evaluation report row.

    One row per (model, loss recipe), covering the frame/peak/delay statistics,
    phone error rates and mispronunciation detection scores.
    """

    MODEL = "model"
    LOSS = "loss"
    SPLIT = "split"
    UTTERANCES = "utterances"

    # Posterior statistics
    FRAMES = "frames"  # mean frames with max non-blank posterior > 0.1
    PEAKS = "peaks"  # mean peaks per utterance
    DELAY_FRAMES = "delay_frames"
    DELAY_MS = "delay_ms"
    DELAY_EXCLUDED = "delay_excluded"
    ONSET_ERROR_FRAMES = "onset_error_frames"
    ONSET_ERROR_MS = "onset_error_ms"

    # Phone error rates
    PER = "PER"
    CPER = "cPER"
    IPER = "iPER"

    # Detection
    PRECISION = "P"
    RECALL = "R"
    F1 = "F1"

    # Flags
    FLAGS = "flags"

    TABLE = [MODEL, LOSS, FRAMES, PEAKS, DELAY_FRAMES, DELAY_MS, PER, CPER, IPER, PRECISION, RECALL, F1]


class ReportFlags:
    """Values placed in the flags column when a quantity fell back to a defined default."""
    NO_REFERENCE = "no_reference"
    NO_PREDICTED_POSITIVES = "no_predicted_positives"
    NO_ACTUAL_POSITIVES = "no_actual_positives"
    EMPTY_CORRECT_SUBSET = "empty_correct_subset"
    EMPTY_INCORRECT_SUBSET = "empty_incorrect_subset"
    NO_PEAKS = "no_peaks"


class RunAttributes:
    """Attribute keys recorded on run spans."""
    EPOCH = "run.epoch"
    LR = "run.lr"
    TRAIN_LOSS = "run.train_loss"
    DEV_PER = "run.dev_per"
    SKIPPED = "run.skipped_utterances"
    LOSS_RECIPE = "run.loss.recipe"
    MODEL_KIND = "run.model.kind"

    # Error attributes
    ERROR_TYPE = "error.type"
    ERROR_MESSAGE = "error.message"
    ERROR_STACK_TRACE = "error.stack_trace"


class SpanKinds:
    """Standard span kinds."""
    EPOCH = "epoch"
    EVALUATION = "evaluation"
    STAGE = "stage"


class RunEvents:
    """Standard event names for the per-session JSON log."""
    SPAN_COMPLETED = "span.completed"


def model_kind(bidirectional: bool) -> str:
    """Short architecture name used in report rows."""
    return "BiGRU" if bidirectional else "UniGRU"


def ordered_columns(extra: List[str]) -> List[str]:
    """Table columns first, then any extra columns in the given order."""
    return ReportColumns.TABLE + [c for c in extra if c not in ReportColumns.TABLE]
