"""
Latency / accuracy trade-off sweep
==================================

Trains one student per (window offset, mode) against a single teacher and
evaluates each against a reference model, so delay can be read off against the
window position. Per mode, the Spearman rank correlation between window lag
(minus the window center; positive reaches into past teacher frames) and
measured delay summarizes the trend.
"""

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Literal, Optional, Union

import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy.stats import spearmanr

from ..core import RunTracker
from ..data import Corpus, CorpusConfig, generate_corpus
from ..errors import ConfigError
from ..losses import LossConfig, WindowSpec
from ..metrics import report_frame, write_report
from ..model import Checkpoint, ModelConfig
from .config import TrainConfig
from .evaluation import decode_utterances, evaluate
from .training import distill, train


def _default_student() -> TrainConfig:
    return TrainConfig(model=ModelConfig.student_of(ModelConfig.desk()))


class SweepConfig(BaseModel):
    """Windows x modes against one teacher; teacher and reference come from checkpoints or are trained."""
    model_config = ConfigDict(extra="forbid", frozen=True)

    corpus: CorpusConfig = CorpusConfig()
    student: TrainConfig = Field(default_factory=_default_student)
    offsets: List[int] = [-6, -3, 0, 3, 6]
    modes: List[Literal["best", "avg"]] = ["best", "avg"]
    teacher_checkpoint: Optional[str] = None
    teacher: Optional[TrainConfig] = None
    reference_checkpoint: Optional[str] = None
    reference: Optional[TrainConfig] = None
    split: Literal["dev", "test"] = "test"
    workers: int = Field(1, ge=1)

    @model_validator(mode="after")
    def _has_teacher(self):
        if self.teacher_checkpoint is None and self.teacher is None:
            raise ValueError("a sweep needs teacher_checkpoint or a teacher TrainConfig")
        for name in ("teacher", "reference"):
            trained = getattr(self, name)
            if trained is not None and trained.loss.needs_teacher:
                raise ValueError(f"the sweep's {name} must be trained without a teacher-student term")
        return self


@dataclass
class SweepResult:
    rows: List[Dict] = field(default_factory=list)
    spearman: Dict[str, float] = field(default_factory=dict)

    @property
    def table(self) -> pd.DataFrame:
        return report_frame(self.rows)


def _obtain(path: Optional[str], train_config: Optional[TrainConfig], corpus: Corpus, tracker,
            progress: bool) -> Optional[Checkpoint]:
    if path is not None:
        return Checkpoint.load(path)
    if train_config is None:
        return None
    checkpoint, _ = train(train_config, corpus, tracker=tracker, progress=progress)
    return checkpoint


def lag_delay_correlation(lags: List[float], delays: List[Optional[float]]) -> float:
    """Spearman rho over the points with a measured delay; nan with fewer than two."""
    points = [(l, d) for l, d in zip(lags, delays) if d is not None and not math.isnan(d)]
    if len(points) < 2:
        return math.nan
    rho, _ = spearmanr([p[0] for p in points], [p[1] for p in points])
    return float(rho)


def reproduce_tradeoff(config: SweepConfig, out_dir: Optional[Union[str, Path]] = None,
                       corpus: Optional[Corpus] = None, tracker: Optional[RunTracker] = None,
                       progress: bool = False) -> SweepResult:
    """
    Run the sweep and optionally write `tradeoff.tsv`, `tradeoff.json` and `spearman.json`.

    Raises:
        ConfigError: If the teacher cannot be obtained.
    """
    if corpus is None:
        corpus = generate_corpus(config.corpus, workers=config.workers)
    teacher = _obtain(config.teacher_checkpoint, config.teacher, corpus, tracker, progress)
    if teacher is None:
        raise ConfigError("reproduce_tradeoff: no teacher")
    reference = _obtain(config.reference_checkpoint, config.reference, corpus, tracker, progress)
    utterances = corpus.split(config.split)
    reference_results = decode_utterances(reference, utterances, config.workers) if reference is not None else None

    result = SweepResult()
    for mode in config.modes:
        lags, delays = [], []
        for offset in config.offsets:
            window = WindowSpec.from_offset(offset, mode)
            loss = LossConfig.from_recipe(window.recipe)
            student, _ = distill(teacher, config.student.with_loss(loss), corpus, tracker=tracker, progress=progress)
            evaluation = evaluate(student, utterances, split=config.split, reference_results=reference_results,
                                  loss_name=window.recipe, workers=config.workers, tracker=tracker)
            row = evaluation.report.to_row()
            row.update({"mode": mode, "offset": offset, "lag": window.lag})
            result.rows.append(row)
            lags.append(window.lag)
            delays.append(evaluation.report.mean_delay_frames)
        result.spearman[mode] = lag_delay_correlation(lags, delays)
        logging.info(f"Phonalign: sweep mode={mode} spearman(lag, delay)={result.spearman[mode]:.3f}")

    if out_dir is not None:
        out_dir = Path(out_dir)
        write_report(result.rows, out_dir / "tradeoff.tsv")
        safe = {k: (None if math.isnan(v) else v) for k, v in result.spearman.items()}
        (out_dir / "spearman.json").write_text(json.dumps(safe, indent=2), encoding="utf-8")
    return result
