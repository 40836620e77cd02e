"""
Synthetic data for Phonalign
============================

A seeded stand-in for a corpus of children reading single scripted words: the
lexicon, the utterance synthesizer with its quality labels and mispronunciation
injection, and split generation with on-disk persistence.
"""

from .config import CorpusConfig, EditRates, SplitCounts
from .corpus import SPLITS, Corpus, generate_corpus, generate_split, load_corpus, save_corpus
from .lexicon import DEFAULT_WORDS, PHONEMES, Lexicon, to_ids, to_symbols
from .synth import (QUALITY_LABELS, Edit, Utterance, apply_edits, inject_mispronunciation,
                    phoneme_prototypes, synthesize_utterance)

__all__ = [
    'Corpus', 'CorpusConfig', 'DEFAULT_WORDS', 'Edit', 'EditRates', 'Lexicon', 'PHONEMES',
    'QUALITY_LABELS', 'SPLITS', 'SplitCounts', 'Utterance', 'apply_edits', 'generate_corpus',
    'generate_split', 'inject_mispronunciation', 'load_corpus', 'phoneme_prototypes',
    'save_corpus', 'synthesize_utterance', 'to_ids', 'to_symbols',
]
