"""
Corpus configuration
====================

Every knob of the synthetic scripted-speech generator. Durations are counted in
stacked frames (30 ms each); feature values are per base frame.
"""

from typing import Dict, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, model_validator

from ..model import STACK_SIZE
from .lexicon import Lexicon


class SplitCounts(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    train: int = Field(400, ge=0)
    dev: int = Field(50, ge=0)
    test: int = Field(50, ge=0)


class EditRates(BaseModel):
    """Per-position substitute/delete and per-gap insert probabilities."""
    model_config = ConfigDict(extra="forbid", frozen=True)

    substitute: float = Field(0.15, ge=0.0, le=1.0)
    delete: float = Field(0.05, ge=0.0, le=1.0)
    insert: float = Field(0.05, ge=0.0, le=1.0)


def _check_range(name: str, bounds: Tuple[int, int], minimum: int):
    lo, hi = bounds
    if lo < minimum or lo > hi:
        raise ValueError(f"{name} must satisfy {minimum} <= lo <= hi, got {bounds}")


class CorpusConfig(BaseModel):
    """
    Synthetic corpus recipe.

    The default label distribution puts 80% of utterances in quality class 1
    (only the target word said) and splits the rest over classes 2-4.
    """
    model_config = ConfigDict(extra="forbid", frozen=True)

    lexicon: Optional[Dict[str, str]] = None
    counts: SplitCounts = SplitCounts()
    label_distribution: Tuple[float, float, float, float] = (0.80, 0.08, 0.06, 0.06)
    mispronunciation_edit_rates: EditRates = EditRates()
    phoneme_duration_range: Tuple[int, int] = (2, 5)
    silence_pad_range: Tuple[int, int] = (3, 8)
    noise_std: float = Field(0.3, ge=0.0)
    seed: int = 0

    base_dim: int = Field(40, ge=1)
    speakers_per_split: int = Field(8, ge=1)
    speaker_jitter: float = Field(0.1, ge=0.0)
    prototype_spread: float = Field(1.0, gt=0.0)
    prototype_min_distance: float = Field(1.0, ge=0.0)
    speech_energy: float = 1.0
    silence_energy: float = -1.0
    burst_range: Tuple[int, int] = (2, 4)
    burst_level: float = 1.5
    burst_std: float = Field(1.0, ge=0.0)
    puff_range: Tuple[int, int] = (1, 3)
    puff_level: float = 2.0
    train_label1_only: bool = True

    @model_validator(mode="after")
    def _consistent(self):
        if any(p < 0 for p in self.label_distribution) or abs(sum(self.label_distribution) - 1.0) > 1e-9:
            raise ValueError(f"label_distribution must be non-negative and sum to 1, got {self.label_distribution}")
        _check_range("phoneme_duration_range", self.phoneme_duration_range, 1)
        _check_range("silence_pad_range", self.silence_pad_range, 1)
        _check_range("burst_range", self.burst_range, 1)
        _check_range("puff_range", self.puff_range, 1)
        if self.speech_energy <= self.silence_energy:
            raise ValueError("speech_energy must exceed silence_energy")
        return self

    @property
    def stacked_dim(self) -> int:
        return STACK_SIZE * self.base_dim

    def build_lexicon(self) -> Lexicon:
        return Lexicon.from_arpabet(self.lexicon)
