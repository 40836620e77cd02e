"""
Multi-stage recipes
===================

A recipe is an ordered list of named stages. Each stage trains one model (BiGRU
or UniGRU) with one loss recipe, optionally against the checkpoint of an earlier
stage as teacher. After training, every stage is evaluated on the same split
against a reference stage and reported as one row.

The default recipe is the full set of comparisons: CTC and alignment baselines
for both architectures, BiGRU students of a UniGRU teacher, and UniGRU students
of the BiGRU models with frame-level and windowed matching.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

import phonalign
from phonalign.core import RunLog, RunTracker
from phonalign.data import Corpus, CorpusConfig, generate_corpus, save_corpus
from phonalign.losses import LossConfig
from phonalign.metrics import MddReport, write_report
from phonalign.model import Checkpoint, ModelConfig
from phonalign.pipeline import TrainConfig, decode_utterances, evaluate, train
from phonalign.pipeline.config import coerce_loss, dump_config
from phonalign.semconv import SpanKinds

ModelKind = Literal["bigru", "unigru"]


class StageConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    name: str
    model: ModelKind = "bigru"
    loss: LossConfig = LossConfig()
    teacher: Optional[str] = None
    epochs: Optional[int] = Field(None, ge=0)

    @field_validator("loss", mode="before")
    @classmethod
    def _recipe_string(cls, value):
        return coerce_loss(value)


def default_stages() -> List[StageConfig]:
    table = [
        ("bigru-ctc", "bigru", "ctc", None),
        ("bigru-align", "bigru", "align", None),
        ("unigru-ctc", "unigru", "ctc", None),
        ("unigru-align", "unigru", "align", None),
        ("bigru-ts_unigru-ctc", "bigru", "ts", "unigru-ctc"),
        ("bigru-ts+align_unigru-ctc", "bigru", "ts+align", "unigru-ctc"),
        ("unigru-ts_bigru-ctc", "unigru", "ts", "bigru-ctc"),
        ("unigru-ts_bigru-ts+align", "unigru", "ts", "bigru-ts+align_unigru-ctc"),
        ("unigru-ts-avg-6_bigru-ctc", "unigru", "ts-avg:-6", "bigru-ctc"),
        ("unigru-ts-avg-6_bigru-ts", "unigru", "ts-avg:-6", "bigru-ts_unigru-ctc"),
        ("unigru-ts-avg-3_bigru-ts+align", "unigru", "ts-avg:-3", "bigru-ts+align_unigru-ctc"),
    ]
    return [StageConfig(name=name, model=kind, loss=loss, teacher=teacher) for name, kind, loss, teacher in table]


class RecipeConfig(BaseModel):
    """
    Stages plus the shared corpus and base training settings.

    `train.model` is the BiGRU architecture; UniGRU stages use its half-size
    unidirectional counterpart.
    """
    model_config = ConfigDict(extra="forbid", frozen=True)

    corpus: CorpusConfig = CorpusConfig()
    train: TrainConfig = TrainConfig()
    stages: List[StageConfig] = Field(default_factory=default_stages)
    reference: Optional[str] = "bigru-align"
    split: Literal["dev", "test"] = "test"
    workers: int = Field(1, ge=1)

    @model_validator(mode="after")
    def _stages_consistent(self):
        seen = set()
        for stage in self.stages:
            if stage.name in seen:
                raise ValueError(f"duplicate stage name {stage.name!r}")
            if stage.teacher is not None and stage.teacher not in seen:
                raise ValueError(f"stage {stage.name!r}: teacher {stage.teacher!r} is not an earlier stage")
            if (stage.teacher is not None) != stage.loss.needs_teacher:
                raise ValueError(f"stage {stage.name!r}: a teacher is required exactly for teacher-student losses")
            seen.add(stage.name)
        if self.reference is not None and self.reference not in seen:
            raise ValueError(f"reference stage {self.reference!r} is not defined")
        return self

    def architecture_for(self, kind: ModelKind) -> ModelConfig:
        bigru = self.train.model.model_copy(update={"bidirectional": True})
        return bigru if kind == "bigru" else ModelConfig.student_of(bigru)

    def train_config_for(self, stage: StageConfig) -> TrainConfig:
        update = {"model": self.architecture_for(stage.model), "loss": stage.loss, "workers": self.workers}
        if stage.epochs is not None:
            update["epochs"] = stage.epochs
        return self.train.model_copy(update=update)


@dataclass
class RecipeResult:
    checkpoints: Dict[str, Checkpoint] = field(default_factory=dict)
    logs: Dict[str, RunLog] = field(default_factory=dict)
    reports: Dict[str, MddReport] = field(default_factory=dict)

    @property
    def rows(self) -> List[Dict]:
        return [report.to_row() for report in self.reports.values()]


def run_recipe(config: RecipeConfig, out_dir: Optional[Union[str, Path]] = None, corpus: Optional[Corpus] = None,
               tracker: Optional[RunTracker] = None, progress: bool = False) -> RecipeResult:
    """
    Train every stage in order, then evaluate each against the reference stage.

    With `out_dir`, writes the corpus, `checkpoints/<stage>.ckpt`,
    `logs/<stage>.json`, the resolved config and `report.tsv` / `report.json`.

    Returns:
        RecipeResult: Checkpoints, run logs and report rows keyed by stage name.
    """
    tracker = tracker or phonalign.get_tracker()
    out_dir = Path(out_dir) if out_dir is not None else None
    if corpus is None:
        corpus = generate_corpus(config.corpus, workers=config.workers)
    if out_dir is not None:
        save_corpus(corpus, out_dir / "corpus")
        dump_config(config, out_dir / "recipe.yaml")

    result = RecipeResult()
    for stage in config.stages:
        train_config = config.train_config_for(stage)
        teacher = result.checkpoints[stage.teacher] if stage.teacher else None
        logging.info(f"Phonalign: stage {stage.name} ({stage.model}, {stage.loss.recipe}"
                     f"{', teacher ' + stage.teacher if stage.teacher else ''})")
        if tracker is not None:
            with tracker.span(SpanKinds.STAGE, stage.name):
                checkpoint, run_log = train(train_config, corpus, teacher=teacher, tracker=tracker, progress=progress)
        else:
            checkpoint, run_log = train(train_config, corpus, teacher=teacher, progress=progress)
        checkpoint.metadata["stage"] = stage.name
        if stage.teacher:
            checkpoint.metadata["teacher_stage"] = stage.teacher
        if out_dir is not None:
            path = out_dir / "checkpoints" / f"{stage.name}.ckpt"
            checkpoint.save(path)
            run_log.checkpoint = str(path)
            run_log.save(out_dir / "logs" / f"{stage.name}.json")
        result.checkpoints[stage.name] = checkpoint
        result.logs[stage.name] = run_log

    utterances = corpus.split(config.split)
    reference_results = None
    if config.reference is not None:
        reference_results = decode_utterances(result.checkpoints[config.reference], utterances, config.workers)
    for stage in config.stages:
        loss_name = stage.loss.recipe + (f" ({stage.teacher})" if stage.teacher else "")
        evaluation = evaluate(result.checkpoints[stage.name], utterances, split=config.split,
                              reference_results=reference_results, loss_name=loss_name,
                              workers=config.workers, tracker=tracker)
        result.reports[stage.name] = evaluation.report

    if out_dir is not None:
        write_report(list(result.reports.values()), out_dir / "report.tsv")
    return result
