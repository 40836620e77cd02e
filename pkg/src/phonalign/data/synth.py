"""
Synthetic scripted speech
=========================

Emits the features of one child reading one prompt word: leading silence, one
prototype-mean segment per spoken phoneme, trailing silence, Gaussian noise on top.
Quality labels 2-4 add the corruptions of the four-way scoring scheme:

    1  only the target word is said
    2  noise / mispronunciation (energy burst plus random edits)
    3  a different word is said
    4  the word plus a spurious noise segment in the silence
"""

import logging
from dataclasses import dataclass, field
from functools import lru_cache
from typing import List, Literal, Optional, Sequence, Tuple

import numpy as np

from ..errors import ConfigError, ShapeError
from ..model import STACK_SIZE, FeatureSequence
from ..utils import derive_rng
from .config import CorpusConfig, EditRates
from .lexicon import PHONEMES, Lexicon

QUALITY_LABELS = (1, 2, 3, 4)

PROTOTYPE_STREAM = 7919
MAX_PROTOTYPE_DRAWS = 1000


@dataclass(frozen=True)
class Edit:
    """
    One edit against the original sequence.

    `position` indexes the original phoneme for substitute/delete and the gap
    before original[position] for insert (position == len means append).
    """
    op: Literal["substitute", "delete", "insert"]
    position: int
    phoneme: Optional[int] = None


def apply_edits(original: Sequence[int], edits: Sequence[Edit]) -> Tuple[int, ...]:
    """Rebuild the edited sequence from the original and its edit record."""
    substitutes = {e.position: e.phoneme for e in edits if e.op == "substitute"}
    deletes = {e.position for e in edits if e.op == "delete"}
    inserts = {}
    for e in edits:
        if e.op == "insert":
            inserts.setdefault(e.position, []).append(e.phoneme)
    out: List[int] = []
    for gap in range(len(original) + 1):
        out.extend(inserts.get(gap, []))
        if gap < len(original) and gap not in deletes:
            out.append(substitutes.get(gap, original[gap]))
    return tuple(int(p) for p in out)


def _check_rates(rates) -> EditRates:
    if isinstance(rates, EditRates):
        return rates
    values = dict(rates)
    for name, value in values.items():
        if not 0.0 <= float(value) <= 1.0:
            raise ConfigError(f"edit rate {name}={value} outside [0, 1]")
    try:
        return EditRates(**values)
    except ValueError as e:
        raise ConfigError(f"invalid edit rates {values}: {e}") from e


def inject_mispronunciation(phonemes: Sequence[int], rng: np.random.Generator, rates,
                            vocab_size: int = len(PHONEMES)) -> Tuple[Tuple[int, ...], List[Edit]]:
    """
    Apply independent per-position substitute/delete and per-gap insert events.

    A substituted phoneme is drawn from the phonemes the word does not contain
    whenever the inventory allows, so substituted positions never re-align with
    the original.

    Args:
        phonemes: Non-empty original sequence.
        rng (np.random.Generator): Source of every draw.
        rates: EditRates or mapping with substitute/delete/insert probabilities.
        vocab_size (int): Size of the phoneme inventory.

    Returns:
        (edited, edits): `apply_edits(phonemes, edits) == edited`.

    Raises:
        ConfigError: If a rate lies outside [0, 1].
        ShapeError: If `phonemes` is empty.
    """
    rates = _check_rates(rates)
    original = tuple(int(p) for p in phonemes)
    if not original:
        raise ShapeError("inject_mispronunciation needs a non-empty sequence")
    outside = np.array([p for p in range(vocab_size) if p not in set(original)])

    edits: List[Edit] = []
    for gap in range(len(original) + 1):
        if rng.random() < rates.insert:
            edits.append(Edit("insert", gap, int(rng.integers(vocab_size))))
        if gap == len(original):
            break
        if rng.random() < rates.substitute:
            if outside.size:
                replacement = int(outside[rng.integers(outside.size)])
            else:
                replacement = int((original[gap] + 1 + rng.integers(vocab_size - 1)) % vocab_size)
            edits.append(Edit("substitute", gap, replacement))
        elif rng.random() < rates.delete:
            edits.append(Edit("delete", gap))
    return apply_edits(original, edits), edits


@lru_cache(maxsize=16)
def phoneme_prototypes(seed: int, dim: int, spread: float, min_distance: float,
                       speech_energy: float, count: int = len(PHONEMES)) -> np.ndarray:
    """
    Fixed per-phoneme mean vectors drawn once from a seeded master stream.

    Every prototype has mean exactly `speech_energy` (a zero-mean pattern plus the
    level), and draws are rejected until all pairwise distances reach `min_distance`.

    Returns:
        np.ndarray: Read-only `count` x `dim` matrix.

    Raises:
        ConfigError: If no draw satisfies the distance bound.
    """
    rng = derive_rng(seed, PROTOTYPE_STREAM)
    for _ in range(MAX_PROTOTYPE_DRAWS):
        pattern = rng.normal(0.0, spread, size=(count, dim))
        pattern -= pattern.mean(axis=1, keepdims=True)
        diffs = pattern[:, None, :] - pattern[None, :, :]
        distances = np.sqrt((diffs ** 2).sum(axis=-1))
        np.fill_diagonal(distances, np.inf)
        if distances.min() >= min_distance:
            prototypes = pattern + speech_energy
            prototypes.setflags(write=False)
            return prototypes
    raise ConfigError(
        f"no prototype draw reached pairwise distance {min_distance} in dim {dim}; lower prototype_min_distance")


def speaker_offset(seed: int, split_code: int, speaker: int, dim: int, jitter: float) -> np.ndarray:
    """Zero-mean per-speaker shift of every prototype (leaves energies untouched)."""
    if jitter <= 0.0:
        return np.zeros(dim)
    offset = derive_rng(seed, PROTOTYPE_STREAM, split_code, speaker).normal(0.0, jitter, size=dim)
    return offset - offset.mean()


@dataclass
class Utterance:
    """
    One synthetic utterance with its ground truth.

    Attributes:
        boundaries: Per spoken phoneme `(onset, offset)` in stacked frames, offset inclusive.
        silence_truth: Per stacked frame, True where no phoneme is spoken.
        base_frames: The unstacked 3T x d frames, kept for re-stacking under other orderings.
    """
    id: str
    word: str
    canonical: Tuple[int, ...]
    spoken: Tuple[int, ...]
    quality_label: int
    features: FeatureSequence
    base_frames: np.ndarray
    boundaries: List[Tuple[int, int]]
    silence_truth: np.ndarray
    speaker: str = ""
    split: str = ""
    edits: List[Edit] = field(default_factory=list)
    said_word: Optional[str] = None

    @property
    def num_frames(self) -> int:
        return self.features.num_frames

    @property
    def is_correct(self) -> bool:
        return self.quality_label == 1

    def features_for(self, ordering: Sequence[int]) -> FeatureSequence:
        """The same base frames stacked under another within-stack ordering."""
        if tuple(ordering) == (0, 1, 2):
            return self.features
        return FeatureSequence.from_base_frames(self.base_frames, ordering)

    def onset_frames(self) -> np.ndarray:
        return np.array([onset for onset, _ in self.boundaries], dtype=np.float64)


def _draw(rng: np.random.Generator, bounds: Tuple[int, int]) -> int:
    return int(rng.integers(bounds[0], bounds[1] + 1))


def synthesize_utterance(rng: np.random.Generator, word: str, quality_label: int, config: CorpusConfig,
                         speaker_shift: Optional[np.ndarray] = None, utt_id: Optional[str] = None,
                         lexicon: Optional[Lexicon] = None, speaker: str = "", split: str = "") -> Utterance:
    """
    Generate one utterance of `word` with the given quality label.

    Args:
        rng (np.random.Generator): Every random draw of this utterance comes from here.
        word (str): Prompt word, must be in the lexicon.
        quality_label (int): 1-4.
        config (CorpusConfig): Generator settings.
        speaker_shift (np.ndarray, optional): Zero-mean offset added to every prototype.
        utt_id (str, optional): Identifier, defaults to `word`.
        lexicon (Lexicon, optional): Defaults to `config.build_lexicon()`.

    Returns:
        Utterance: Features plus ground-truth boundaries and silence.

    Raises:
        UnknownWordError: If `word` is not in the lexicon.
        ConfigError: If `quality_label` is not one of 1-4.
    """
    lexicon = lexicon or config.build_lexicon()
    canonical = lexicon[word]
    if quality_label not in QUALITY_LABELS:
        raise ConfigError(f"quality_label must be one of {QUALITY_LABELS}, got {quality_label}")

    spoken, edits, said_word = canonical, [], None
    if quality_label == 2:
        spoken, edits = inject_mispronunciation(canonical, rng, config.mispronunciation_edit_rates,
                                                lexicon.vocab_size)
        if not spoken or spoken == canonical:
            spoken, edits = canonical, []
    elif quality_label == 3:
        others = [w for w in lexicon.sorted_words() if lexicon[w] != canonical]
        if not others:
            raise ConfigError("label 3 needs a lexicon word whose phonemes differ from the prompt")
        said_word = others[int(rng.integers(len(others)))]
        spoken = lexicon[said_word]

    dim = config.base_dim
    prototypes = phoneme_prototypes(config.seed, dim, config.prototype_spread, config.prototype_min_distance,
                                    config.speech_energy)
    shift = np.zeros(dim) if speaker_shift is None else np.asarray(speaker_shift, dtype=np.float64)
    silence = np.full(dim, config.silence_energy)

    # (kind, mean vector, stacked frames)
    segments: List[Tuple[str, np.ndarray, int]] = []
    lead = _draw(rng, config.silence_pad_range)
    if quality_label == 4:
        puff = _draw(rng, config.puff_range)
        before = int(rng.integers(lead + 1))
        segments.append(("silence", silence, before))
        segments.append(("puff", np.full(dim, config.puff_level), puff))
        segments.append(("silence", silence, lead - before))
    else:
        segments.append(("silence", silence, lead))
    for phoneme in spoken:
        segments.append(("phoneme", prototypes[phoneme] + shift, _draw(rng, config.phoneme_duration_range)))
    segments.append(("silence", silence, _draw(rng, config.silence_pad_range)))

    means, kinds, boundaries = [], [], []
    frame = 0
    for kind, mean, length in segments:
        if length == 0:
            continue
        means.append(np.repeat(mean[None, :], length, axis=0))
        kinds.extend([kind] * length)
        if kind == "phoneme":
            boundaries.append((frame, frame + length - 1))
        frame += length
    stacked_means = np.concatenate(means, axis=0)
    base = np.repeat(stacked_means, STACK_SIZE, axis=0)

    if config.noise_std > 0.0:
        base = base + rng.normal(0.0, config.noise_std, size=base.shape)
    kinds = np.array(kinds)
    if quality_label == 4:
        puff_rows = np.repeat(kinds == "puff", STACK_SIZE)
        base[puff_rows] += rng.normal(0.0, config.burst_std, size=(int(puff_rows.sum()), dim))
    if quality_label == 2:
        speech_start, speech_end = boundaries[0][0], boundaries[-1][1]
        length = min(_draw(rng, config.burst_range), speech_end - speech_start + 1)
        start = int(rng.integers(speech_start, speech_end - length + 2))
        rows = slice(STACK_SIZE * start, STACK_SIZE * (start + length))
        base[rows] += config.burst_level + rng.normal(0.0, config.burst_std, size=base[rows].shape)

    features = FeatureSequence.from_base_frames(base)
    logging.debug(f"Phonalign: synthesized {utt_id or word} label={quality_label} T={features.num_frames}")
    return Utterance(
        id=utt_id or word,
        word=word,
        canonical=canonical,
        spoken=spoken,
        quality_label=quality_label,
        features=features,
        base_frames=base,
        boundaries=boundaries,
        silence_truth=kinds != "phoneme",
        speaker=speaker,
        split=split,
        edits=edits,
        said_word=said_word,
    )
