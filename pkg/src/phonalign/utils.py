"""
Utility functions for Phonalign
===============================

This module contains helpers used throughout Phonalign: session ID generation,
derivation of independent random streams from a master seed, and formatting of
run statistics for console display.
"""

import uuid
from typing import Dict

import numpy as np


def generate_session_id() -> str:
    """
    Generate a globally unique identifier for the current Phonalign session.

    Returns:
        str: A UUID4 string representing the unique session.
    """
    return str(uuid.uuid4())


def derive_rng(seed: int, *stream: int) -> np.random.Generator:
    """
    Build a generator for one named stream of a seeded run.

    Each distinct `stream` tuple (e.g. split code and utterance index) yields an
    independent sequence, so work can be split across threads without changing
    the numbers drawn.

    Args:
        seed (int): Master seed of the run.
        *stream (int): Non-negative integers identifying the stream.

    Returns:
        np.random.Generator: A PCG64 generator seeded from `(seed, *stream)`.
    """
    return np.random.default_rng([int(seed), *(int(s) for s in stream)])


def format_run_stats(stats: Dict) -> str:
    """
    Format run-level summary statistics as a human-readable string.

    Args:
        stats (Dict): Expected keys: 'session_id', 'total_spans', 'successful_spans',
            'failed_spans', 'epochs', 'skipped_utterances', 'active_spans'.

    Returns:
        str: Multiline string representing the run metrics.
    """
    return f"""
Run Statistics:
   Session ID: {stats['session_id']}
   Total Spans: {stats['total_spans']}
   Successful: {stats['successful_spans']}
   Failed: {stats['failed_spans']}
   Epochs: {stats['epochs']}
   Skipped Utterances: {stats['skipped_utterances']}
   Active Spans: {stats['active_spans']}
"""
