"""
Phonalign - Low-latency Phoneme Recognition for Pronunciation Scoring
=====================================================================

GRU acoustic models trained with CTC, an alignment penalty that pushes phoneme
posteriors out of silence, and frame-windowed teacher-student distillation from
bidirectional to unidirectional models, evaluated on a seeded synthetic corpus of
scripted single-word reading.
"""

import atexit
import logging
from pathlib import Path
from typing import List, Optional, Union

from . import core
from .core import EpochRecord, RunLog, RunSpan, RunTracker, get_tracker
from .ctc import Posteriorgram, collapse, ctc_brute_force, ctc_loss, greedy_decode
from .errors import (CheckpointFormatError, ConfigError, CTCInfeasibleError, EmptySubsetError,
                     InstanceTooLargeError, MissingInputError, NonFiniteError, PhonalignError, ShapeError,
                     UnknownWordError)
from .model import Checkpoint, FeatureSequence, ModelConfig, model_forward, stack_frames

__version__ = "0.1.0"
__all__ = [
    'Checkpoint', 'CheckpointFormatError', 'ConfigError', 'CTCInfeasibleError', 'EmptySubsetError',
    'EpochRecord', 'FeatureSequence', 'InstanceTooLargeError', 'MissingInputError', 'ModelConfig',
    'NonFiniteError', 'PhonalignError', 'Posteriorgram', 'RunLog', 'RunSpan', 'RunTracker',
    'ShapeError', 'UnknownWordError', 'add_tags', 'collapse', 'ctc_brute_force', 'ctc_loss',
    'get_tracker', 'greedy_decode', 'init', 'model_forward', 'stack_frames',
]


def init(
    tags: Optional[List[str]] = None,
    debug: bool = False,
    log_file: Optional[Union[str, Path]] = None,
    session_id: Optional[str] = None,
) -> RunTracker:
    """
    Initialize the Phonalign run tracker.

    Args:
        tags (List[str], optional): Tags attached to every span of the session.
        debug (bool): Enable debug logging. Defaults to False.
        log_file (str | Path, optional): File receiving one JSON entry per completed span.
        session_id (str, optional): Reuse a session id instead of generating one.

    Returns:
        RunTracker: The global tracker (created on the first call).

    Example:
        >>> import phonalign
        >>> tracker = phonalign.init(tags=["desk", "seed0"], log_file="runs/session.log")
    """
    if debug:
        logging.basicConfig(level=logging.DEBUG)

    with core._init_lock:
        if core._global_tracker is None:
            core._global_tracker = RunTracker(session_id=session_id, tags=tags, log_file=log_file)
            logging.info("Phonalign: tracker initialized")
            logging.info(f"Phonalign:   session: {core._global_tracker.session_id}")
            if tags:
                logging.info(f"Phonalign:   tags: {tags}")

    return core._global_tracker


def add_tags(tags: List[str]):
    """
    Add tags to the current tracker.

    Raises:
        PhonalignError: If `init()` has not been called.
    """
    tracker = get_tracker()
    if not tracker:
        raise PhonalignError("Tracker not initialized. Call phonalign.init() first.")
    tracker.add_tags(tags)


def _shutdown_phonalign():
    """Flush the global tracker on exit."""
    tracker = get_tracker()
    if tracker:
        tracker.shutdown()


atexit.register(_shutdown_phonalign)

# Keep library logging silent unless the application configures it.
logging.getLogger(__name__).addHandler(logging.NullHandler())
