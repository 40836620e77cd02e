"""
Loss Terms
==========

The three additive terms: CTC, the alignment penalty and teacher-student matching.
"""

from typing import Dict, Tuple

import numpy as np

from ..ctc import ctc_loss
from .alignment import alignment_penalty, silence_mask
from .base import LossContext, LossTerm
from .teacher_student import ts_frame_loss, ts_window_loss


class CTCTerm(LossTerm):
    """Negative log-likelihood of the labels; gradient against the log-probabilities."""

    name = "ctc"

    @property
    def required_inputs(self) -> Tuple[str, ...]:
        return ("log_probs", "labels")

    def evaluate(self, context: LossContext) -> Tuple[float, Dict[str, np.ndarray]]:
        value, grad = ctc_loss(context.log_probs, context.labels)
        return value, {"log_probs": grad}


class AlignmentTerm(LossTerm):
    """Alignment penalty over the posteriorgram, silence taken from the input energies."""

    name = "align"

    @property
    def required_inputs(self) -> Tuple[str, ...]:
        return ("posteriorgram", "features")

    def evaluate(self, context: LossContext) -> Tuple[float, Dict[str, np.ndarray]]:
        mask = silence_mask(context.features)
        value, grad = alignment_penalty(context.posteriorgram, mask, self.config.align_clamp)
        return value, {"posteriorgram": grad}


class TeacherStudentTerm(LossTerm):
    """Frame-level or windowed MSE against constant teacher logits."""

    name = "ts"

    @property
    def required_inputs(self) -> Tuple[str, ...]:
        return ("logits", "teacher_logits")

    def evaluate(self, context: LossContext) -> Tuple[float, Dict[str, np.ndarray]]:
        window = self.config.ts.window if self.config.ts is not None else None
        if window is None:
            value, grad = ts_frame_loss(context.logits, context.teacher_logits)
        else:
            value, grad = ts_window_loss(context.logits, context.teacher_logits, window)
        return value, {"logits": grad}
