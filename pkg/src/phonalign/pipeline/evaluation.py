"""
Evaluation
==========

Inference-mode decoding of a split and every evaluation quantity on top of it:
phone error rates, peak statistics, delay against a reference model, onset error
against the generator's ground truth and mispronunciation detection scores.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd

from .. import numerics as nx
from ..core import RunTracker, get_tracker
from ..ctc import Posteriorgram, greedy_decode
from ..data import Corpus, Utterance
from ..errors import EmptySubsetError
from ..losses import silence_mask
from ..metrics import (MddReport, PeakStats, delay_relative, mdd_classify, onset_error,
                       peak_stats, per, prf1)
from ..model import Checkpoint, FeatureSequence, model_forward
from ..semconv import ReportFlags, RunAttributes, SpanKinds, model_kind


def infer(checkpoint: Checkpoint, features: FeatureSequence) -> Posteriorgram:
    """Deterministic forward pass and softmax, no tape."""
    logits = model_forward(checkpoint, features, train_mode=False)
    return Posteriorgram(nx.softmax_rows(logits).values, features.frame_duration_ms)


@dataclass
class UtteranceResult:
    id: str
    quality_label: int
    canonical: tuple
    hyp: tuple
    verdict: str
    stats: PeakStats
    posteriorgram: Optional[Posteriorgram] = None


def decode_utterances(checkpoint: Checkpoint, utterances: Sequence[Utterance], workers: int = 1,
                      frame_threshold: float = 0.1, peak_threshold: float = 0.5, mdd_threshold: int = 1,
                      keep_posteriorgrams: bool = False) -> List[UtteranceResult]:
    """Greedy-decode every utterance; results keep the input order."""

    def run(utt: Utterance) -> UtteranceResult:
        post = infer(checkpoint, utt.features)
        hyp = greedy_decode(post)
        return UtteranceResult(
            id=utt.id,
            quality_label=utt.quality_label,
            canonical=tuple(utt.canonical),
            hyp=hyp,
            verdict=mdd_classify(hyp, utt.canonical, mdd_threshold),
            stats=peak_stats(post, frame_threshold, peak_threshold),
            posteriorgram=post if keep_posteriorgrams else None,
        )

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(run, utterances))
    return [run(utt) for utt in utterances]


def split_per(checkpoint: Checkpoint, utterances: Sequence[Utterance], workers: int = 1) -> Optional[float]:
    """Overall PER of greedy decodes against the canonical sequences, None for an empty split."""
    if not utterances:
        return None
    results = decode_utterances(checkpoint, utterances, workers)
    return per([(r.hyp, r.canonical, r.quality_label) for r in results])


@dataclass
class EvaluationResult:
    report: MddReport
    results: List[UtteranceResult] = field(default_factory=list)
    peak_summary: Dict[str, float] = field(default_factory=dict)

    @property
    def stats(self) -> List[PeakStats]:
        return [r.stats for r in self.results]


def _subset_per(pairs, subset: str, flag: str, flags: List[str]) -> Optional[float]:
    try:
        return per(pairs, subset)
    except EmptySubsetError:
        flags.append(flag)
        return None


def _finite_or_none(value: float) -> Optional[float]:
    return None if value is None or math.isnan(value) else value


def evaluate(checkpoint: Checkpoint, utterances: Union[Corpus, Sequence[Utterance]], split: str = "test",
             reference: Optional[Checkpoint] = None, reference_results: Optional[List[UtteranceResult]] = None,
             model_name: Optional[str] = None, loss_name: Optional[str] = None,
             frame_threshold: float = 0.1, peak_threshold: float = 0.5, mdd_threshold: int = 1,
             workers: int = 1, tracker: Optional[RunTracker] = None) -> EvaluationResult:
    """
    Evaluate a checkpoint on one split.

    Args:
        checkpoint (Checkpoint): Model under evaluation, run in inference mode.
        utterances: A Corpus (the `split` is taken from it) or a list of utterances.
        split (str): Split name, also written into the report row.
        reference (Checkpoint, optional): Model whose mean peak onsets define delay 0.
        reference_results (list, optional): Pre-decoded reference, reused across models.

    Returns:
        EvaluationResult: The report row, per-utterance results and a peak summary.
        Without a reference the delay fields are None and flagged.
    """
    if isinstance(utterances, Corpus):
        utterances = utterances.split(split)
    tracker = tracker or get_tracker()
    if tracker is None:
        return _evaluate(checkpoint, utterances, split, reference, reference_results, model_name, loss_name,
                         frame_threshold, peak_threshold, mdd_threshold, workers, None)
    with tracker.span(SpanKinds.EVALUATION, f"evaluate {split}") as span:
        result = _evaluate(checkpoint, utterances, split, reference, reference_results, model_name, loss_name,
                           frame_threshold, peak_threshold, mdd_threshold, workers, span)
    return result


def _evaluate(checkpoint, utterances, split, reference, reference_results, model_name, loss_name,
              frame_threshold, peak_threshold, mdd_threshold, workers, span) -> EvaluationResult:
    if not utterances:
        raise EmptySubsetError(f"evaluate: split {split!r} has no utterances")
    results = decode_utterances(checkpoint, utterances, workers, frame_threshold, peak_threshold, mdd_threshold)
    pairs = [(r.hyp, r.canonical, r.quality_label) for r in results]
    flags: List[str] = []

    overall = per(pairs)
    cper = _subset_per(pairs, "correct", ReportFlags.EMPTY_CORRECT_SUBSET, flags)
    iper = _subset_per(pairs, "incorrect", ReportFlags.EMPTY_INCORRECT_SUBSET, flags)
    detection = prf1([r.verdict for r in results], [r.quality_label for r in results])
    flags.extend(detection.flags)

    delay_frames = delay_ms = None
    delay_excluded = 0
    if reference is not None or reference_results is not None:
        if reference_results is None:
            reference_results = decode_utterances(reference, utterances, workers, frame_threshold, peak_threshold,
                                                  mdd_threshold)
        delay = delay_relative([r.stats for r in results], [r.stats for r in reference_results])
        delay_frames, delay_ms = _finite_or_none(delay.mean_delay_frames), _finite_or_none(delay.mean_delay_ms)
        delay_excluded = delay.excluded
        if delay.compared == 0:
            flags.append(ReportFlags.NO_PEAKS)
    else:
        flags.append(ReportFlags.NO_REFERENCE)

    truth = onset_error([r.stats for r in results], [u.onset_frames() for u in utterances])

    report = MddReport(
        precision=detection.precision,
        recall=detection.recall,
        f1=detection.f1,
        per=overall,
        cper=cper,
        iper=iper,
        mean_delay_frames=delay_frames,
        mean_delay_ms=delay_ms,
        frames=float(np.mean([r.stats.frames_above_threshold for r in results])),
        peaks=float(np.mean([len(r.stats.peaks) for r in results])),
        delay_excluded=delay_excluded,
        onset_error_frames=_finite_or_none(truth.mean_delay_frames),
        onset_error_ms=_finite_or_none(truth.mean_delay_ms),
        model=model_name or model_kind(checkpoint.config.bidirectional),
        loss=loss_name if loss_name is not None else str(checkpoint.metadata.get("loss", "")),
        split=split,
        utterances=len(results),
        flags=tuple(flags),
    )
    summary = {
        "mean_frames_above_threshold": report.frames,
        "mean_peaks": report.peaks,
        "mean_onset": float(np.nanmean([r.stats.mean_onset for r in results]))
        if any(r.stats.peaks for r in results) else math.nan,
        "utterances_without_peaks": sum(not r.stats.peaks for r in results),
    }
    if span is not None:
        span.set_attribute(RunAttributes.DEV_PER if split == "dev" else "run.per", overall)
    logging.info(f"Phonalign: evaluated {report.model} {report.loss!r} on {split}: PER={overall:.2f} "
                 f"F1={detection.f1:.2f} frames={report.frames:.1f} peaks={report.peaks:.2f}")
    return EvaluationResult(report=report, results=results, peak_summary=summary)


def write_posteriorgram_dump(checkpoint: Checkpoint, utterances: Sequence[Utterance], out_path: Union[str, Path],
                             frame_threshold: float = 0.1, peak_threshold: float = 0.5,
                             workers: int = 1) -> List[Path]:
    """
    Plot-ready tab-delimited dumps.

    `out_path` gets one row per utterance (id, label, T, frames above threshold,
    peaks, mean onset); `<out_path stem>.frames.tsv` gets one row per frame with
    the max non-blank posterior, the blank posterior, the argmax, the frame energy
    and the silence mask.

    Returns:
        list[Path]: Summary and per-frame files.
    """
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    results = decode_utterances(checkpoint, utterances, workers, frame_threshold, peak_threshold,
                                keep_posteriorgrams=True)
    summary_rows, frame_rows = [], []
    for utt, result in zip(utterances, results):
        probs = result.posteriorgram.probs
        summary_rows.append({
            "id": utt.id,
            "label": utt.quality_label,
            "T": utt.num_frames,
            "frames_above_threshold": result.stats.frames_above_threshold,
            "peaks": len(result.stats.peaks),
            "mean_onset": result.stats.mean_onset,
            "hyp": " ".join(map(str, result.hyp)),
            "canonical": " ".join(map(str, result.canonical)),
        })
        mask = silence_mask(utt.features).is_silence
        for t in range(probs.shape[0]):
            frame_rows.append({
                "id": utt.id,
                "frame": t,
                "max_non_blank": float(probs[t, :-1].max()),
                "blank": float(probs[t, -1]),
                "argmax": int(np.argmax(probs[t])),
                "energy": float(utt.features.energies[t]),
                "silence": int(mask[t]),
                "silence_truth": int(utt.silence_truth[t]),
            })
    frames_path = out_path.with_name(f"{out_path.stem}.frames.tsv")
    pd.DataFrame(summary_rows).to_csv(out_path, sep="\t", index=False, na_rep="")
    pd.DataFrame(frame_rows).to_csv(frames_path, sep="\t", index=False)
    logging.info(f"Phonalign: wrote posteriorgram stats for {len(summary_rows)} utterances to {out_path}")
    return [out_path, frames_path]
