"""
Base Loss Term for Phonalign
============================
This module defines the abstract base class for the loss terms that `compose_loss`
sums. Each term reads what it needs from a shared `LossContext` and returns its
value with gradients keyed by the context field they are taken against.

Responsibilities:
    - Check that every input the term needs is present
    - Evaluate the term and its gradient
    - Apply the term's weight

All loss terms should inherit from LossTerm and be registered in `TERM_REGISTRY`.
"""

from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from ..errors import MissingInputError
from ..model import FeatureSequence
from .config import LossConfig


@dataclass
class LossContext:
    """
    Everything a loss term may read for one utterance.

    Attributes:
        log_probs: T x (V+1) log-softmax outputs.
        posteriorgram: T x (V+1) softmax outputs.
        logits: T x (V+1) pre-softmax outputs.
        features: Input features (energies drive the silence mask).
        labels: Target phoneme ids.
        teacher_logits: T x (V+1) teacher outputs, constant.
    """
    log_probs: Optional[np.ndarray] = None
    posteriorgram: Optional[np.ndarray] = None
    logits: Optional[np.ndarray] = None
    features: Optional[FeatureSequence] = None
    labels: Optional[Sequence[int]] = None
    teacher_logits: Optional[np.ndarray] = None

    def __post_init__(self):
        for name in ("log_probs", "posteriorgram", "logits", "teacher_logits"):
            value = getattr(self, name)
            if value is not None:
                setattr(self, name, np.asarray(getattr(value, "probs", getattr(value, "values", value)),
                                               dtype=np.float64))


@dataclass
class TermResult:
    name: str
    value: float
    grads: Dict[str, np.ndarray] = field(default_factory=dict)


class LossTerm(ABC):
    """
    Abstract base class for one additive loss term.

    Args:
        config (LossConfig): The full loss config (terms read their own settings).
        weight (float): Multiplier applied to value and gradients.
    """

    name: str = "term"

    def __init__(self, config: LossConfig, weight: float = 1.0):
        self.config = config
        self.weight = weight

    @property
    @abstractmethod
    def required_inputs(self) -> Tuple[str, ...]:
        """Names of the LossContext fields this term reads."""

    @abstractmethod
    def evaluate(self, context: LossContext) -> Tuple[float, Dict[str, np.ndarray]]:
        """Unweighted value and gradients keyed by context field name."""

    def compute(self, context: LossContext) -> TermResult:
        missing = [name for name in self.required_inputs if getattr(context, name) is None]
        if missing:
            raise MissingInputError(f"loss term {self.name!r} is enabled but {', '.join(missing)} missing")
        value, grads = self.evaluate(context)
        return TermResult(
            name=self.name,
            value=self.weight * value,
            grads={key: self.weight * grad for key, grad in grads.items()},
        )
