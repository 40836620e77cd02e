"""
CTC for Phonalign
=================

Connectionist temporal classification: the loss via the log-space forward-backward
recursion with its exact gradient, the many-to-one path collapse, greedy best-path
decoding and a brute-force enumeration oracle.

The blank symbol is always the last output index (V for a V-phoneme vocabulary).
"""

import itertools
import math
from dataclasses import dataclass
from typing import Iterable, Sequence, Tuple

import numpy as np

from .errors import CTCInfeasibleError, InstanceTooLargeError, PhonalignError, ShapeError
from .model import FRAME_DURATION_MS

PhonemeSeq = Tuple[int, ...]

BRUTE_FORCE_LIMIT = 10 ** 7


@dataclass
class Posteriorgram:
    """T x (V+1) per-frame distributions over phonemes plus blank."""
    probs: np.ndarray
    frame_duration_ms: float = FRAME_DURATION_MS

    def __post_init__(self):
        self.probs = np.asarray(self.probs, dtype=np.float64)
        if self.probs.ndim != 2 or self.probs.shape[1] < 2:
            raise ShapeError(f"Posteriorgram needs a T x (V+1) matrix, got {list(self.probs.shape)}")
        if (self.probs < 0).any() or (self.probs > 1).any():
            raise ShapeError("Posteriorgram entries must lie in [0, 1]")
        if not np.allclose(self.probs.sum(axis=1), 1.0, atol=1e-9, rtol=0.0):
            raise ShapeError("Posteriorgram rows must sum to 1")

    @property
    def num_frames(self) -> int:
        return int(self.probs.shape[0])

    @property
    def blank(self) -> int:
        return int(self.probs.shape[1] - 1)


def validate_labels(labels: Iterable[int], vocab_size: int) -> PhonemeSeq:
    """Return `labels` as a tuple, checking every id lies in [0, vocab_size)."""
    labels = tuple(int(l) for l in labels)
    for l in labels:
        if not 0 <= l < vocab_size:
            raise ShapeError(f"label {l} outside [0, {vocab_size}); the blank id {vocab_size} is not a label")
    return labels


def required_frames(labels: Sequence[int]) -> int:
    """Minimum T able to emit `labels`: one frame each plus a blank between repeats."""
    repeats = sum(1 for a, b in zip(labels, labels[1:]) if a == b)
    return len(labels) + repeats


def collapse(path: Iterable[int], blank: int) -> PhonemeSeq:
    """Merge adjacent duplicates, then drop blanks."""
    return tuple(int(k) for k, _ in itertools.groupby(path) if k != blank)


def greedy_decode(post: Posteriorgram) -> PhonemeSeq:
    """Best-path decoding: per-frame argmax, then collapse."""
    return collapse(np.argmax(post.probs, axis=1), post.blank)


def _extended(labels: PhonemeSeq, blank: int) -> Tuple[np.ndarray, np.ndarray]:
    ext = np.full(2 * len(labels) + 1, blank, dtype=np.int64)
    ext[1::2] = labels
    can_skip = np.zeros(ext.size, dtype=bool)
    can_skip[2:] = (ext[2:] != blank) & (ext[2:] != ext[:-2])
    return ext, can_skip


def ctc_loss(log_probs, labels: Sequence[int]) -> Tuple[float, np.ndarray]:
    """
    Negative log-likelihood of `labels` under per-frame log-probabilities.

    Args:
        log_probs: T x (V+1) log-probabilities (a Tensor or array), blank last.
        labels: Non-empty phoneme ids in [0, V).

    Returns:
        (loss, grad): The loss and its gradient with respect to every entry of `log_probs`.

    Raises:
        CTCInfeasibleError: If T is below the minimum the labels need.
    """
    lp = np.asarray(getattr(log_probs, "values", log_probs), dtype=np.float64)
    if lp.ndim != 2:
        raise ShapeError(f"ctc_loss expects T x (V+1) log-probabilities, got {list(lp.shape)}")
    T, K = lp.shape
    blank = K - 1
    labels = validate_labels(labels, blank)
    if not labels:
        raise PhonalignError("ctc_loss: labels must be non-empty")
    needed = required_frames(labels)
    if T < needed:
        raise CTCInfeasibleError(T, needed)

    ext, can_skip = _extended(labels, blank)
    S = ext.size
    emit = lp[:, ext]

    alpha = np.full((T, S), -np.inf)
    alpha[0, 0] = emit[0, 0]
    alpha[0, 1] = emit[0, 1]
    for t in range(1, T):
        prev = alpha[t - 1]
        a = prev.copy()
        a[1:] = np.logaddexp(a[1:], prev[:-1])
        a[2:] = np.where(can_skip[2:], np.logaddexp(a[2:], prev[:-2]), a[2:])
        alpha[t] = a + emit[t]

    # beta[t, s] excludes the emission at t itself
    beta = np.full((T, S), -np.inf)
    beta[T - 1, S - 1] = 0.0
    beta[T - 1, S - 2] = 0.0
    for t in range(T - 2, -1, -1):
        nxt = beta[t + 1] + emit[t + 1]
        b = nxt.copy()
        b[:-1] = np.logaddexp(b[:-1], nxt[1:])
        b[:-2] = np.where(can_skip[2:], np.logaddexp(b[:-2], nxt[2:]), b[:-2])
        beta[t] = b

    log_likelihood = np.logaddexp(alpha[T - 1, S - 1], alpha[T - 1, S - 2])
    occupancy = np.exp(alpha + beta - log_likelihood)
    grad = np.zeros_like(lp)
    for s in range(S):
        grad[:, ext[s]] -= occupancy[:, s]
    return float(-log_likelihood), grad


def ctc_brute_force(probs, labels: Sequence[int]) -> float:
    """
    Negative log of the summed probability of every length-T path collapsing to `labels`.

    Returns `math.inf` when no path collapses to `labels`.

    Raises:
        InstanceTooLargeError: If (V+1)^T exceeds 10^7 paths.
    """
    p = np.asarray(getattr(probs, "values", probs), dtype=np.float64)
    T, K = p.shape
    if K ** T > BRUTE_FORCE_LIMIT:
        raise InstanceTooLargeError(f"ctc_brute_force: {K}^{T} paths exceeds {BRUTE_FORCE_LIMIT}")
    target = validate_labels(labels, K - 1)
    total = 0.0
    frames = np.arange(T)
    for path in itertools.product(range(K), repeat=T):
        if collapse(path, K - 1) == target:
            total += float(np.prod(p[frames, path]))
    return -math.log(total) if total > 0.0 else math.inf
