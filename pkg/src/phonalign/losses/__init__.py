"""
Losses for Phonalign
====================

Composable loss terms. `compose_loss` sums the terms a `LossConfig` enables; the
combined teacher loss (`ts+align`) therefore contains exactly one copy of CTC plus
the alignment penalty plus the teacher-student term.
"""

from dataclasses import dataclass, field
from typing import Dict, List

import numpy as np

from .alignment import SilenceMask, alignment_penalty, silence_mask
from .base import LossContext, LossTerm, TermResult
from .config import LossConfig, LossWeights, TeacherSpec, WindowSpec
from .teacher_student import ts_frame_loss, ts_window_loss
from .terms import AlignmentTerm, CTCTerm, TeacherStudentTerm

__all__ = [
    'AlignmentTerm', 'CTCTerm', 'LossConfig', 'LossContext', 'LossResult', 'LossTerm',
    'LossWeights', 'SilenceMask', 'TeacherSpec', 'TeacherStudentTerm', 'TermResult',
    'WindowSpec', 'alignment_penalty', 'compose_loss', 'get_terms_for_config',
    'silence_mask', 'ts_frame_loss', 'ts_window_loss',
]

# Term registry, in summation order
TERM_REGISTRY = {
    'ctc': CTCTerm,
    'align': AlignmentTerm,
    'ts': TeacherStudentTerm,
}


def get_terms_for_config(config: LossConfig) -> List[LossTerm]:
    """Instantiate the enabled terms of `config` with their weights."""
    enabled = {
        'ctc': config.use_ctc,
        'align': config.use_align,
        'ts': config.ts is not None,
    }
    return [TERM_REGISTRY[name](config, getattr(config.weights, name))
            for name in TERM_REGISTRY if enabled[name]]


@dataclass
class LossResult:
    """Total loss, per-term weighted values and gradients keyed by context field."""
    total: float
    terms: Dict[str, float] = field(default_factory=dict)
    grads: Dict[str, np.ndarray] = field(default_factory=dict)


def compose_loss(config: LossConfig, context: LossContext) -> LossResult:
    """
    Sum every enabled, weighted term and accumulate their gradients.

    Raises:
        MissingInputError: If an enabled term's inputs (e.g. teacher logits) are absent.
        CTCInfeasibleError: Propagated from the CTC term.
    """
    total = 0.0
    terms: Dict[str, float] = {}
    grads: Dict[str, np.ndarray] = {}
    for term in get_terms_for_config(config):
        result = term.compute(context)
        total += result.value
        terms[result.name] = result.value
        for key, grad in result.grads.items():
            grads[key] = grads[key] + grad if key in grads else grad
    return LossResult(total=total, terms=terms, grads=grads)
