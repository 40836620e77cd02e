"""
Teacher-student losses
======================

Mean squared error between student and teacher pre-softmax outputs, frame by frame
or against a window of teacher frames. The teacher is a constant: gradients are
returned for the student only.

Per frame the squared error is summed over the logit dimension; the total is the
mean over student frames.
"""

from typing import Tuple

import numpy as np

from ..errors import ConfigError, ShapeError
from .config import WindowSpec


def _pair(student_logits, teacher_logits) -> Tuple[np.ndarray, np.ndarray]:
    student = np.asarray(getattr(student_logits, "values", student_logits), dtype=np.float64)
    teacher = np.asarray(getattr(teacher_logits, "values", teacher_logits), dtype=np.float64)
    if student.shape != teacher.shape or student.ndim != 2:
        raise ShapeError(
            f"teacher-student: student {list(student.shape)} and teacher {list(teacher.shape)} differ")
    return student, teacher


def ts_frame_loss(student_logits, teacher_logits) -> Tuple[float, np.ndarray]:
    """(1/T) * sum_t ||teacher_t - student_t||^2 and its gradient wrt the student."""
    student, teacher = _pair(student_logits, teacher_logits)
    T = student.shape[0]
    diff = student - teacher
    per_frame = (diff * diff).sum(axis=1)
    return float(per_frame.sum() / T), 2.0 * diff / T


def ts_window_loss(student_logits, teacher_logits, window: WindowSpec) -> Tuple[float, np.ndarray]:
    """
    Windowed teacher-student loss.

    Student frame i is compared with teacher frames i+lo .. i+hi, clipped to the
    sequence. In `best` mode the frame contributes the smallest squared distance in
    the window; in `avg` mode the mean of them. Frames whose clipped window is empty
    contribute 0.

    Raises:
        ConfigError: If window.lo > window.hi.
    """
    if window.lo > window.hi:
        raise ConfigError(f"window lo={window.lo} > hi={window.hi}")
    student, teacher = _pair(student_logits, teacher_logits)
    T = student.shape[0]
    contrib = np.zeros(T)
    grad = np.zeros_like(student)
    for i in range(T):
        first = max(0, i + window.lo)
        last = min(T - 1, i + window.hi)
        if first > last:
            continue
        diffs = student[i] - teacher[first:last + 1]
        dists = (diffs * diffs).sum(axis=1)
        if window.mode == "best":
            k = int(np.argmin(dists))
            contrib[i] = dists[k]
            grad[i] = 2.0 * diffs[k]
        else:
            contrib[i] = dists.mean()
            grad[i] = 2.0 * diffs.mean(axis=0)
    return float(contrib.sum() / T), grad / T
