"""
Mispronunciation detection scores
=================================

Precision, recall and F1 with "mispronounced" as the positive class. Quality
labels 2-4 are ground-truth positives, label 1 is negative.
"""

from dataclasses import dataclass
from typing import Sequence, Tuple, Union

from ..errors import ShapeError
from ..semconv import ReportFlags
from .edit import MISPRONOUNCED


@dataclass(frozen=True)
class DetectionScores:
    """Percentages; `flags` names any quantity that fell back to 0."""
    precision: float
    recall: float
    f1: float
    flags: Tuple[str, ...] = ()


def f1_score(precision: float, recall: float) -> float:
    """Harmonic mean, 0 when both are 0."""
    if precision + recall <= 0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def _positive(prediction: Union[str, bool]) -> bool:
    if isinstance(prediction, str):
        return prediction == MISPRONOUNCED
    return bool(prediction)


def prf1(predictions: Sequence[Union[str, bool]], labels: Sequence[int]) -> DetectionScores:
    """
    Score verdicts against quality labels.

    Args:
        predictions: "correct"/"mispronounced" verdicts (or booleans, True = mispronounced).
        labels: Quality labels 1-4, aligned with `predictions`.

    Returns:
        DetectionScores: P, R and F1 in percent.

    Raises:
        ShapeError: If the lengths differ.
    """
    if len(predictions) != len(labels):
        raise ShapeError(f"prf1: {len(predictions)} predictions for {len(labels)} labels")
    predicted = [_positive(p) for p in predictions]
    actual = [int(label) != 1 for label in labels]
    true_pos = sum(p and a for p, a in zip(predicted, actual))
    predicted_pos = sum(predicted)
    actual_pos = sum(actual)

    flags = []
    if predicted_pos == 0:
        precision = 0.0
        flags.append(ReportFlags.NO_PREDICTED_POSITIVES)
    else:
        precision = 100.0 * true_pos / predicted_pos
    if actual_pos == 0:
        recall = 0.0
        flags.append(ReportFlags.NO_ACTUAL_POSITIVES)
    else:
        recall = 100.0 * true_pos / actual_pos
    return DetectionScores(precision, recall, f1_score(precision, recall), tuple(flags))
