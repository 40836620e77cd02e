"""
Training and distillation
=========================

Adam over label-1 training utterances with the halving schedule, and
teacher-student distillation with teacher logits computed once per utterance
and stacking order in inference mode.

Within a batch every member runs forward/backward on its own tape (optionally on
worker threads); the gradient reduction into the parameters and the Adam step
happen on the calling thread in a fixed order, so the result does not depend on
the worker count.
"""

import hashlib
import logging
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
from tqdm import tqdm

from .. import numerics as nx
from ..core import EpochRecord, RunLog, RunTracker, get_tracker
from ..data import Corpus, Utterance, generate_corpus
from ..errors import ConfigError, CTCInfeasibleError, MissingInputError, ShapeError
from ..losses import LossContext, compose_loss
from ..model import CYCLIC_ORDERINGS, Checkpoint, FeatureSequence, model_forward
from ..semconv import RunAttributes, SpanKinds, model_kind
from ..serialization import read_arrays, write_arrays
from ..utils import derive_rng
from .config import TrainConfig
from .evaluation import split_per
from .schedule import HalvingSchedule

SHUFFLE_STREAM = 101
DROPOUT_STREAM = 202
TEACHER_LOGITS_KIND = "teacher_logits"

Ordering = Tuple[int, int, int]


def checkpoint_fingerprint(checkpoint: Checkpoint) -> str:
    """Digest of the config and every weight, stable across processes."""
    digest = hashlib.sha256(checkpoint.config.model_dump_json().encode("utf-8"))
    for name in sorted(checkpoint.weights):
        digest.update(name.encode("utf-8"))
        digest.update(np.ascontiguousarray(checkpoint.weights[name].values, dtype="<f8").tobytes())
    return digest.hexdigest()


class TeacherCache:
    """
    Teacher logits per (utterance, stacking order), computed in inference mode.

    Entries are kept in memory and, given a `cache_dir`, on disk under a
    subdirectory named after the teacher's fingerprint, so a changed teacher
    never reads stale logits.
    """

    def __init__(self, teacher: Checkpoint, cache_dir: Optional[Union[str, Path]] = None, use_cache: bool = True):
        self.teacher = teacher
        self.use_cache = use_cache
        self.cache_dir = Path(cache_dir) / checkpoint_fingerprint(teacher)[:16] if cache_dir else None
        self._memory: Dict[Tuple[str, Ordering], np.ndarray] = {}
        self.hits = 0
        self.misses = 0
        self._lock = threading.Lock()

    def _path(self, utt_id: str, ordering: Ordering) -> Path:
        return self.cache_dir / f"{utt_id}.{''.join(map(str, ordering))}.bin"

    def logits(self, utt: Utterance, ordering: Ordering, features: FeatureSequence) -> np.ndarray:
        key = (utt.id, tuple(ordering))
        if self.use_cache:
            with self._lock:
                cached = self._memory.get(key)
                if cached is not None:
                    self.hits += 1
                    return cached
            if self.cache_dir is not None and self._path(*key).is_file():
                _, arrays = read_arrays(self._path(*key), kind=TEACHER_LOGITS_KIND)
                with self._lock:
                    self._memory[key] = arrays["logits"]
                    self.hits += 1
                return arrays["logits"]
        with self._lock:
            self.misses += 1
        values = model_forward(self.teacher, features, train_mode=False).values
        if self.use_cache:
            with self._lock:
                self._memory[key] = values
            if self.cache_dir is not None:
                write_arrays(self._path(*key), {"logits": values}, kind=TEACHER_LOGITS_KIND,
                             meta={"id": utt.id, "ordering": list(ordering)})
        return values


@dataclass
class _MemberResult:
    loss: float = 0.0
    gradients: Optional[nx.Gradients] = None
    skipped: bool = False


def _member_step(checkpoint: Checkpoint, config: TrainConfig, utt: Utterance, ordering: Ordering,
                 teacher: Optional[TeacherCache], rng: np.random.Generator) -> _MemberResult:
    """Forward, loss and backward for one utterance on its own tape."""
    features = utt.features_for(ordering)
    teacher_logits = teacher.logits(utt, ordering, features) if teacher is not None else None
    try:
        with nx.Tape() as tape:
            logits = model_forward(checkpoint, features, train_mode=True, rng=rng)
            if teacher_logits is not None and list(teacher_logits.shape) != logits.shape:
                raise ShapeError(f"{utt.id}: teacher logits {list(teacher_logits.shape)} vs student {logits.shape}")
            tensors = {"logits": logits, "log_probs": nx.log_softmax_rows(logits)}
            if config.loss.use_align:
                tensors["posteriorgram"] = nx.softmax_rows(logits)
            context = LossContext(
                log_probs=tensors["log_probs"],
                posteriorgram=tensors.get("posteriorgram"),
                logits=logits,
                features=features,
                labels=utt.spoken,
                teacher_logits=teacher_logits,
            )
            result = compose_loss(config.loss, context)
            loss = nx.attach_loss(result.total, [(tensors[key], grad) for key, grad in result.grads.items()])
        return _MemberResult(loss=result.total, gradients=tape.backward(loss))
    except CTCInfeasibleError as e:
        logging.warning(f"Phonalign: skipping {utt.id}: {e}")
        return _MemberResult(skipped=True)


def _training_items(utterances: List[Utterance], augmentation: bool) -> List[Tuple[Utterance, Ordering]]:
    orderings = CYCLIC_ORDERINGS if augmentation else (CYCLIC_ORDERINGS[0],)
    return [(utt, ordering) for utt in utterances for ordering in orderings]


def _resolve_corpus(config: TrainConfig, corpus: Optional[Corpus]) -> Corpus:
    if corpus is not None:
        return corpus
    if config.corpus is None:
        raise ConfigError("train: no corpus given and TrainConfig.corpus is unset")
    return generate_corpus(config.corpus, workers=config.workers)


def _fit(config: TrainConfig, corpus: Corpus, teacher: Optional[TeacherCache], init: Optional[Checkpoint],
         tracker: Optional[RunTracker], progress: bool) -> Tuple[Checkpoint, RunLog]:
    if config.loss.needs_teacher and teacher is None:
        raise MissingInputError(f"loss {config.loss.recipe!r} needs a teacher checkpoint")
    metadata = {"loss": config.loss.recipe, "model_kind": model_kind(config.model.bidirectional)}
    if init is not None:
        if init.config != config.model:
            raise ConfigError("train: the initial checkpoint's config differs from TrainConfig.model")
        checkpoint = init.clone()
        checkpoint.metadata.update(metadata)
    else:
        checkpoint = Checkpoint.initialize(config.model, seed=config.seed, **metadata)
    run_log = RunLog(config=config.model_dump(mode="json"))
    if config.epochs == 0:
        return checkpoint, run_log

    train_set = [u for u in corpus.train if u.quality_label == 1]
    if len(train_set) != len(corpus.train):
        logging.info(f"Phonalign: ignoring {len(corpus.train) - len(train_set)} non-label-1 training utterances")
    if not train_set:
        raise ConfigError("train: the training split has no label-1 utterances")
    if train_set[0].features.dim != config.model.input_dim:
        raise ConfigError(f"corpus feature dim {train_set[0].features.dim} != model input_dim {config.model.input_dim}")
    dev_set = corpus.dev[:config.dev_limit] if config.dev_limit else corpus.dev

    items = _training_items(train_set, config.augmentation)
    optimizer = nx.Adam(lr=config.lr)
    schedule = HalvingSchedule(config.lr, config.lr_halving_start_epoch, config.lr_halving_compare)
    tracker = tracker or get_tracker()
    pool = ThreadPoolExecutor(max_workers=config.workers) if config.workers > 1 else None
    try:
        for epoch in range(1, config.epochs + 1):
            if tracker is None:
                record = _run_epoch(epoch, checkpoint, config, items, dev_set, teacher, optimizer, schedule, pool,
                                    progress, None)
            else:
                with tracker.span(SpanKinds.EPOCH, f"{metadata['model_kind']} {config.loss.recipe} epoch {epoch}",
                                  **{RunAttributes.EPOCH: epoch, RunAttributes.LOSS_RECIPE: config.loss.recipe,
                                     RunAttributes.MODEL_KIND: metadata["model_kind"]}) as span:
                    record = _run_epoch(epoch, checkpoint, config, items, dev_set, teacher, optimizer, schedule,
                                        pool, progress, span)
            run_log.epochs.append(record)
    finally:
        if pool is not None:
            pool.shutdown()
    checkpoint.metadata["epoch"] = config.epochs
    return checkpoint, run_log


def _run_epoch(epoch, checkpoint, config, items, dev_set, teacher, optimizer, schedule, pool, progress,
               span) -> EpochRecord:
    started = time.time()
    lr = schedule.lr
    optimizer.set_lr(lr)
    order = derive_rng(config.seed, SHUFFLE_STREAM, epoch).permutation(len(items))
    batches = [order[i:i + config.batch_size] for i in range(0, len(order), config.batch_size)]
    params = checkpoint.parameters()

    total_loss, used, skipped = 0.0, 0, 0
    for batch_index, batch in enumerate(tqdm(batches, desc=f"epoch {epoch}", disable=not progress, leave=False)):
        def step(position):
            utt, ordering = items[position]
            rng = derive_rng(config.seed, DROPOUT_STREAM, epoch, int(position))
            return _member_step(checkpoint, config, utt, ordering, teacher, rng)

        results = list(pool.map(step, batch)) if pool is not None else [step(p) for p in batch]
        valid = [r for r in results if not r.skipped]
        skipped += len(results) - len(valid)
        if not valid:
            continue
        for result in valid:
            result.gradients.accumulate(params, 1.0 / len(valid))
        optimizer.step(checkpoint.weights)
        batch_loss = sum(r.loss for r in valid)
        total_loss += batch_loss
        used += len(valid)
        logging.debug(f"Phonalign: epoch {epoch} batch {batch_index} loss={batch_loss / len(valid):.4f}")

    train_loss = total_loss / used if used else float("nan")
    dev_per = split_per(checkpoint, dev_set, config.workers)
    halved = schedule.step(epoch, dev_per)
    record = EpochRecord(epoch=epoch, train_loss=train_loss, dev_per=dev_per, lr=lr, skipped=skipped,
                         utterances=used, lr_halved=halved, wall_time=time.time() - started)
    if span is not None:
        span.set_attribute(RunAttributes.TRAIN_LOSS, train_loss)
        span.set_attribute(RunAttributes.DEV_PER, dev_per)
        span.set_attribute(RunAttributes.LR, lr)
        span.set_attribute(RunAttributes.SKIPPED, skipped)
    dev_text = f"{dev_per:.2f}" if dev_per is not None else "n/a"
    logging.info(f"Phonalign: epoch {epoch}/{config.epochs} loss={train_loss:.4f} dev PER={dev_text} "
                 f"lr={lr:g} skipped={skipped}")
    return record


def train(config: TrainConfig, corpus: Optional[Corpus] = None, teacher: Optional[Checkpoint] = None,
          tracker: Optional[RunTracker] = None, init: Optional[Checkpoint] = None,
          cache_dir: Optional[Union[str, Path]] = None, progress: bool = False) -> Tuple[Checkpoint, RunLog]:
    """
    Train one model.

    Args:
        config (TrainConfig): Model, loss recipe and schedule.
        corpus (Corpus, optional): Defaults to generating `config.corpus`.
        teacher (Checkpoint, optional): Required by teacher-student recipes; when
            omitted it is loaded from the loss config's `teacher_checkpoint`.
        init (Checkpoint, optional): Start from a copy of these weights.
        progress (bool): Show a per-epoch progress bar.

    Returns:
        (Checkpoint, RunLog): The final-epoch checkpoint and per-epoch records.
        With `epochs == 0` the initialized checkpoint and an empty log.

    Raises:
        MissingInputError: A teacher-student recipe without any teacher.
        ConfigError: No corpus, or feature/model dimensions disagree.
    """
    corpus = _resolve_corpus(config, corpus)
    if config.loss.needs_teacher:
        if teacher is None and config.loss.ts.teacher_checkpoint:
            teacher = Checkpoint.load(config.loss.ts.teacher_checkpoint)
        if teacher is None:
            raise MissingInputError(f"loss {config.loss.recipe!r} needs a teacher checkpoint")
        return distill(teacher, config, corpus, cache_dir=cache_dir, init=init, tracker=tracker, progress=progress)
    logging.info(f"Phonalign: training {model_kind(config.model.bidirectional)} with {config.loss.recipe} "
                 f"for {config.epochs} epochs")
    return _fit(config, corpus, None, init, tracker, progress)


def distill(teacher: Checkpoint, config: TrainConfig, corpus: Optional[Corpus] = None,
            cache_dir: Optional[Union[str, Path]] = None, use_cache: bool = True, init: Optional[Checkpoint] = None,
            tracker: Optional[RunTracker] = None, progress: bool = False) -> Tuple[Checkpoint, RunLog]:
    """
    Train a student against constant teacher logits.

    Any direction pairing works (including a bidirectional student of a
    unidirectional teacher); only the vocabularies and input dimensions must agree.
    The teacher is never modified.

    Raises:
        ConfigError: Vocabulary or input mismatch, or a loss without a teacher-student term.
    """
    if teacher.config.vocab_size != config.model.vocab_size:
        raise ConfigError(f"teacher vocabulary {teacher.config.vocab_size} != student {config.model.vocab_size}")
    if teacher.config.input_dim != config.model.input_dim:
        raise ConfigError(f"teacher input_dim {teacher.config.input_dim} != student {config.model.input_dim}")
    if not config.loss.needs_teacher:
        raise ConfigError(f"distill: loss {config.loss.recipe!r} has no teacher-student term")
    corpus = _resolve_corpus(config, corpus)
    cache = TeacherCache(teacher, cache_dir=cache_dir, use_cache=use_cache)
    logging.info(f"Phonalign: distilling {model_kind(teacher.config.bidirectional)} teacher into "
                 f"{model_kind(config.model.bidirectional)} student with {config.loss.recipe}")
    checkpoint, run_log = _fit(config, corpus, cache, init, tracker, progress)
    logging.info(f"Phonalign: teacher logits cache hits={cache.hits} misses={cache.misses}")
    return checkpoint, run_log
