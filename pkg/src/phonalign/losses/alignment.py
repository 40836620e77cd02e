"""
Alignment penalty
=================

Energy-based silence detection and the alignment penalty built on it. On silence
frames the penalty scores the non-blank mass, elsewhere the blank mass; adding the
mean log score to CTC pushes blanks into silence and phonemes onto speech.
"""

from dataclasses import dataclass
from typing import Tuple, Union

import numpy as np

from ..ctc import Posteriorgram
from ..errors import ConfigError, ShapeError
from ..model import FeatureSequence


@dataclass
class SilenceMask:
    """`is_silence[t]` holds exactly when E_t is below the utterance mean energy."""
    is_silence: np.ndarray

    def __len__(self) -> int:
        return int(self.is_silence.size)


def silence_mask(features: Union[FeatureSequence, np.ndarray]) -> SilenceMask:
    """Mark frames whose energy is strictly below the utterance mean."""
    energies = np.asarray(getattr(features, "energies", features), dtype=np.float64)
    if energies.size == 0:
        raise ShapeError("silence_mask needs at least one frame")
    return SilenceMask(is_silence=energies < energies.mean())


def alignment_penalty(post: Union[Posteriorgram, np.ndarray], mask: SilenceMask,
                      clamp: float = 1e-8) -> Tuple[float, np.ndarray]:
    """
    (1/T) * sum_t log f(t), with f(t) = P(non-blank) on silence, P(blank) otherwise.

    Each f(t) is clamped to [clamp, 1]; frames at or below the floor contribute no gradient.

    Args:
        post: Posteriorgram or raw T x (V+1) probabilities (blank last).
        mask (SilenceMask): Per-frame silence flags.
        clamp (float): Probability floor in (0, 1).

    Returns:
        (penalty, grad): The penalty and its gradient with respect to each probability.
    """
    if not 0.0 < clamp < 1.0:
        raise ConfigError(f"alignment clamp must lie in (0, 1), got {clamp}")
    probs = np.asarray(getattr(post, "probs", post), dtype=np.float64)
    T, K = probs.shape
    if len(mask) != T:
        raise ShapeError(f"silence mask covers {len(mask)} frames, posteriorgram has {T}")
    blank = K - 1
    silent = mask.is_silence

    f = np.where(silent, probs[:, :blank].sum(axis=1), probs[:, blank])
    penalty = float(np.log(np.clip(f, clamp, 1.0)).mean())

    active = f > clamp
    dlog = np.zeros(T)
    dlog[active] = 1.0 / (T * f[active])
    grad = np.zeros_like(probs)
    grad[silent, :blank] = dlog[silent, None]
    grad[~silent, blank] = dlog[~silent]
    return penalty, grad
