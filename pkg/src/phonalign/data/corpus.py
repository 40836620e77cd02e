"""
Corpus generation and persistence
=================================

Builds the train/dev/test splits from a `CorpusConfig` and moves them to and from
disk: a `manifest.json` listing every utterance plus one binary feature file per
utterance under `features/`.

Splits stand in for grade-based partitions as disjoint speaker pools. Each
utterance draws from its own stream derived from (seed, split, index), so the
corpus does not depend on how many workers generate it.
"""

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterator, List, Union

import numpy as np

from ..errors import CheckpointFormatError, ConfigError
from ..model import FeatureSequence
from ..serialization import read_arrays, write_arrays
from ..utils import derive_rng
from .config import CorpusConfig
from .lexicon import Lexicon
from .synth import Edit, Utterance, speaker_offset, synthesize_utterance

SPLITS = ("train", "dev", "test")
SPLIT_CODES: Dict[str, int] = {name: code for code, name in enumerate(SPLITS)}

MANIFEST_NAME = "manifest.json"
MANIFEST_VERSION = 1
UTTERANCE_KIND = "utterance"


@dataclass
class Corpus:
    """The three splits of one generated corpus."""
    config: CorpusConfig
    train: List[Utterance] = field(default_factory=list)
    dev: List[Utterance] = field(default_factory=list)
    test: List[Utterance] = field(default_factory=list)
    dropped_train: int = 0

    def split(self, name: str) -> List[Utterance]:
        if name not in SPLIT_CODES:
            raise ConfigError(f"unknown split {name!r}; expected one of {SPLITS}")
        return getattr(self, name)

    def __iter__(self) -> Iterator[Utterance]:
        for name in SPLITS:
            yield from self.split(name)

    def __len__(self) -> int:
        return len(self.train) + len(self.dev) + len(self.test)


def _generate_one(config: CorpusConfig, lexicon: Lexicon, words, split: str, index: int) -> Utterance:
    code = SPLIT_CODES[split]
    rng = derive_rng(config.seed, code, index)
    label = int(rng.choice(4, p=np.asarray(config.label_distribution))) + 1
    word = words[int(rng.integers(len(words)))]
    speaker = int(rng.integers(config.speakers_per_split))
    shift = speaker_offset(config.seed, code, speaker, config.base_dim, config.speaker_jitter)
    return synthesize_utterance(
        rng, word, label, config,
        speaker_shift=shift,
        utt_id=f"{split}-{index:05d}",
        lexicon=lexicon,
        speaker=f"{split}-spk{speaker:02d}",
        split=split,
    )


def generate_split(config: CorpusConfig, split: str, workers: int = 1) -> List[Utterance]:
    """Generate every utterance of one split with the full label distribution."""
    lexicon = config.build_lexicon()
    words = lexicon.sorted_words()
    count = getattr(config.counts, split)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(lambda i: _generate_one(config, lexicon, words, split, i), range(count)))
    return [_generate_one(config, lexicon, words, split, i) for i in range(count)]


def generate_corpus(config: CorpusConfig, workers: int = 1) -> Corpus:
    """
    Generate the train/dev/test splits.

    The ASR-training split is drawn with the full label distribution and then,
    when `train_label1_only` is set, filtered down to label 1.

    Args:
        config (CorpusConfig): Generator settings.
        workers (int): Threads used per split; the output does not depend on it.

    Returns:
        Corpus: The three splits.
    """
    corpus = Corpus(config=config)
    for split in SPLITS:
        utterances = generate_split(config, split, workers)
        if split == "train" and config.train_label1_only:
            kept = [u for u in utterances if u.quality_label == 1]
            corpus.dropped_train = len(utterances) - len(kept)
            utterances = kept
        setattr(corpus, split, utterances)
    logging.info(f"Phonalign: generated corpus seed={config.seed} train={len(corpus.train)} "
                 f"(dropped {corpus.dropped_train} non-label-1) dev={len(corpus.dev)} test={len(corpus.test)}")
    return corpus


def _edit_record(edit: Edit) -> Dict:
    return {"op": edit.op, "position": edit.position, "phoneme": edit.phoneme}


def save_corpus(corpus: Corpus, out_dir: Union[str, Path]) -> Path:
    """
    Write the manifest and per-utterance feature files.

    Returns:
        Path: The manifest path.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for utt in corpus:
        rel = f"features/{utt.id}.bin"
        write_arrays(out_dir / rel,
                     {"base_frames": utt.base_frames, "silence_truth": utt.silence_truth.astype(np.float64)},
                     kind=UTTERANCE_KIND, meta={"id": utt.id})
        entries.append({
            "id": utt.id,
            "word": utt.word,
            "label": utt.quality_label,
            "split": utt.split,
            "speaker": utt.speaker,
            "canonical": list(utt.canonical),
            "spoken": list(utt.spoken),
            "boundaries": [list(b) for b in utt.boundaries],
            "edits": [_edit_record(e) for e in utt.edits],
            "said_word": utt.said_word,
            "path": rel,
        })
    manifest = {
        "format_version": MANIFEST_VERSION,
        "config": corpus.config.model_dump(mode="json"),
        "dropped_train": corpus.dropped_train,
        "utterances": entries,
    }
    path = out_dir / MANIFEST_NAME
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True), encoding="utf-8")
    logging.info(f"Phonalign: saved {len(entries)} utterances to {out_dir}")
    return path


def load_corpus(corpus_dir: Union[str, Path]) -> Corpus:
    """
    Read a corpus written by `save_corpus`.

    Raises:
        CheckpointFormatError: Missing manifest or unknown manifest version.
    """
    corpus_dir = Path(corpus_dir)
    path = corpus_dir / MANIFEST_NAME
    if not path.is_file():
        raise CheckpointFormatError(f"{corpus_dir}: no {MANIFEST_NAME}")
    manifest = json.loads(path.read_text(encoding="utf-8"))
    if manifest.get("format_version") != MANIFEST_VERSION:
        raise CheckpointFormatError(f"{path}: unknown format_version {manifest.get('format_version')!r}")

    corpus = Corpus(config=CorpusConfig(**manifest["config"]), dropped_train=manifest.get("dropped_train", 0))
    for entry in manifest["utterances"]:
        _, arrays = read_arrays(corpus_dir / entry["path"], kind=UTTERANCE_KIND)
        base = arrays["base_frames"]
        utt = Utterance(
            id=entry["id"],
            word=entry["word"],
            canonical=tuple(entry["canonical"]),
            spoken=tuple(entry["spoken"]),
            quality_label=int(entry["label"]),
            features=FeatureSequence.from_base_frames(base),
            base_frames=base,
            boundaries=[tuple(b) for b in entry["boundaries"]],
            silence_truth=arrays["silence_truth"].astype(bool),
            speaker=entry.get("speaker", ""),
            split=entry["split"],
            edits=[Edit(**e) for e in entry.get("edits", [])],
            said_word=entry.get("said_word"),
        )
        corpus.split(utt.split).append(utt)
    logging.info(f"Phonalign: loaded {len(corpus)} utterances from {corpus_dir}")
    return corpus
