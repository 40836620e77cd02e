"""Desk-scale trend checks: 500-utterance corpora, 2-layer 64-unit models. Run with --runslow."""
import math

import numpy as np
import pytest

from phonalign.data import CorpusConfig, generate_corpus
from phonalign.model import ModelConfig
from phonalign.pipeline import SweepConfig, TrainConfig, reproduce_tradeoff, split_per, train
from phonalign.semconv import ReportColumns
from phonalign_recipes.recipe import RecipeConfig, StageConfig, run_recipe

SEEDS = range(5)
WORKERS = 4
TREND_EPOCHS = 12


def _desk_train(seed: int, epochs: int = TREND_EPOCHS) -> TrainConfig:
    return TrainConfig(model=ModelConfig.desk(bidirectional=True), epochs=epochs, lr=0.002, batch_size=16,
                       seed=seed, workers=WORKERS)


def _onset_gap(report) -> float:
    return math.inf if report.onset_error_frames is None else abs(report.onset_error_frames)


@pytest.mark.slow
def test_bigru_learns_the_noiseless_corpus():
    corpus = generate_corpus(CorpusConfig(noise_std=0.0, seed=0), workers=WORKERS)
    checkpoint, run_log = train(_desk_train(0, epochs=25), corpus)
    assert split_per(checkpoint, corpus.dev, workers=WORKERS) < 5.0
    assert run_log.epochs[-1].train_loss < run_log.epochs[0].train_loss


@pytest.mark.slow
def test_alignment_loss_moves_peaks_onto_phonemes():
    closer = wider = 0
    for seed in SEEDS:
        config = RecipeConfig(
            corpus=CorpusConfig(seed=seed),
            train=_desk_train(seed),
            stages=[StageConfig(name="bigru-ctc", loss="ctc"), StageConfig(name="bigru-align", loss="align")],
            reference=None,
            workers=WORKERS,
        )
        reports = run_recipe(config).reports
        ctc, align = reports["bigru-ctc"], reports["bigru-align"]
        closer += _onset_gap(align) < _onset_gap(ctc)
        wider += align.frames > ctc.frames
    assert closer >= 4
    assert wider >= 4


@pytest.mark.slow
def test_windowed_distillation_beats_ctc_student():
    better = 0
    for seed in SEEDS:
        config = RecipeConfig(
            corpus=CorpusConfig(seed=seed),
            train=_desk_train(seed),
            stages=[
                StageConfig(name="unigru-ctc", model="unigru", loss="ctc"),
                StageConfig(name="bigru-ts+align", model="bigru", loss="ts+align", teacher="unigru-ctc"),
                StageConfig(name="unigru-ts-avg-6", model="unigru", loss="ts-avg:-6", teacher="bigru-ts+align"),
            ],
            reference=None,
            workers=WORKERS,
        )
        reports = run_recipe(config).reports
        better += reports["unigru-ts-avg-6"].per < reports["unigru-ctc"].per
    assert better >= 4


@pytest.mark.slow
def test_delay_grows_as_the_window_moves_into_the_past(tmp_path):
    corpus_config = CorpusConfig(seed=0)
    corpus = generate_corpus(corpus_config, workers=WORKERS)
    reference, _ = train(_desk_train(0).with_loss("align"), corpus)
    reference.save(tmp_path / "bigru-align.ckpt")
    student = _desk_train(0).model_copy(update={"model": ModelConfig.student_of(ModelConfig.desk())})
    config = SweepConfig(
        corpus=corpus_config,
        student=student,
        offsets=[6, 3, 0, -3, -6],
        modes=["avg"],
        teacher_checkpoint=str(tmp_path / "bigru-align.ckpt"),
        reference_checkpoint=str(tmp_path / "bigru-align.ckpt"),
        workers=WORKERS,
    )
    result = reproduce_tradeoff(config, tmp_path / "sweep", corpus=corpus)
    rows = sorted(result.rows, key=lambda r: r["lag"])
    assert [r["offset"] for r in rows] == [6, 3, 0, -3, -6]
    delays = [r[ReportColumns.DELAY_FRAMES] for r in rows]
    assert all(d is not None for d in delays)
    assert np.all(np.diff(delays) >= 0.0)
    assert result.spearman["avg"] >= 0.8
