"""
Metrics for Phonalign
=====================

Edit distance, phone error rates, posterior peak statistics, delay and
mispronunciation detection scores, plus report emission.
"""

from .detection import DetectionScores, f1_score, prf1
from .edit import CORRECT, MISPRONOUNCED, EditOps, ScoredPair, edit_distance, mdd_classify, per
from .peaks import DelayResult, Peak, PeakStats, delay_relative, frames_to_ms, onset_error, peak_stats
from .report import MddReport, report_frame, write_report

__all__ = [
    'CORRECT', 'DelayResult', 'DetectionScores', 'EditOps', 'MISPRONOUNCED', 'MddReport', 'Peak',
    'PeakStats', 'ScoredPair', 'delay_relative', 'edit_distance', 'f1_score', 'frames_to_ms',
    'mdd_classify', 'onset_error', 'peak_stats', 'per', 'prf1', 'report_frame', 'write_report',
]
