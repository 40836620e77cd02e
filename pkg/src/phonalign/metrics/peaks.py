"""
Posterior peaks and delay
=========================

A peak is a maximal run of frames whose largest non-blank posterior exceeds the
peak threshold. Delay compares per-utterance mean peak onsets of a model against
a reference model; one stacked frame lasts 30 ms.
"""

import math
from dataclasses import dataclass, field
from typing import List, NamedTuple, Sequence, Union

import numpy as np

from ..ctc import Posteriorgram
from ..errors import ConfigError, ShapeError
from ..model import FRAME_DURATION_MS


def frames_to_ms(frames: float) -> float:
    return frames * FRAME_DURATION_MS


@dataclass(frozen=True)
class Peak:
    onset: int
    offset: int  # inclusive
    phoneme: int


@dataclass
class PeakStats:
    """Per-utterance posterior statistics."""
    frames_above_threshold: int
    peaks: List[Peak] = field(default_factory=list)
    num_frames: int = 0

    @property
    def mean_onset(self) -> float:
        """Mean peak onset in frames, nan without peaks."""
        if not self.peaks:
            return math.nan
        return float(np.mean([p.onset for p in self.peaks]))

    @property
    def covered_frames(self) -> int:
        return sum(p.offset - p.onset + 1 for p in self.peaks)


def _runs(active: np.ndarray) -> List[tuple]:
    """(start, end inclusive) of every run of True."""
    padded = np.concatenate([[False], active, [False]])
    edges = np.flatnonzero(np.diff(padded.astype(np.int8)))
    return [(int(s), int(e) - 1) for s, e in zip(edges[::2], edges[1::2])]


def peak_stats(post: Union[Posteriorgram, np.ndarray], frame_threshold: float = 0.1,
               peak_threshold: float = 0.5) -> PeakStats:
    """
    Count frames above `frame_threshold` and find peaks above `peak_threshold`.

    The dominant phoneme of a peak is the non-blank argmax at the run's highest frame.

    Raises:
        ConfigError: If a threshold lies outside (0, 1).
    """
    for name, value in (("frame_threshold", frame_threshold), ("peak_threshold", peak_threshold)):
        if not 0.0 < value < 1.0:
            raise ConfigError(f"peak_stats: {name}={value} outside (0, 1)")
    probs = np.asarray(getattr(post, "probs", post), dtype=np.float64)
    if probs.ndim != 2 or probs.shape[1] < 2:
        raise ShapeError(f"peak_stats needs a T x (V+1) matrix, got {list(probs.shape)}")
    non_blank = probs[:, :-1]
    best = non_blank.max(axis=1)
    peaks = []
    for start, end in _runs(best > peak_threshold):
        top = start + int(np.argmax(best[start:end + 1]))
        peaks.append(Peak(start, end, int(np.argmax(non_blank[top]))))
    return PeakStats(int((best > frame_threshold).sum()), peaks, int(probs.shape[0]))


class DelayResult(NamedTuple):
    mean_delay_frames: float
    mean_delay_ms: float
    excluded: int
    compared: int


def delay_relative(model_stats: Sequence[PeakStats], reference_stats: Sequence[PeakStats]) -> DelayResult:
    """
    Mean over utterances of model mean onset minus reference mean onset.

    Utterances where either side has no peak are excluded and counted. With
    nothing left to compare, the delay is nan.

    Raises:
        ShapeError: If the two lists cover a different number of utterances.
    """
    if len(model_stats) != len(reference_stats):
        raise ShapeError(f"delay_relative: {len(model_stats)} model vs {len(reference_stats)} reference utterances")
    deltas = [m.mean_onset - r.mean_onset for m, r in zip(model_stats, reference_stats) if m.peaks and r.peaks]
    excluded = len(model_stats) - len(deltas)
    if not deltas:
        return DelayResult(math.nan, math.nan, excluded, 0)
    frames = float(np.mean(deltas))
    return DelayResult(frames, frames_to_ms(frames), excluded, len(deltas))


def onset_error(model_stats: Sequence[PeakStats], truth_onsets: Sequence[Sequence[float]]) -> DelayResult:
    """
    Mean over utterances of model mean peak onset minus mean ground-truth phoneme onset.

    Utterances without a model peak are excluded.
    """
    if len(model_stats) != len(truth_onsets):
        raise ShapeError(f"onset_error: {len(model_stats)} utterances vs {len(truth_onsets)} ground truths")
    deltas = [m.mean_onset - float(np.mean(t)) for m, t in zip(model_stats, truth_onsets)
              if m.peaks and len(t)]
    excluded = len(model_stats) - len(deltas)
    if not deltas:
        return DelayResult(math.nan, math.nan, excluded, 0)
    frames = float(np.mean(deltas))
    return DelayResult(frames, frames_to_ms(frames), excluded, len(deltas))
