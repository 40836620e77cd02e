"""
Pipeline for Phonalign
======================

Training with the halving schedule, teacher-student distillation, evaluation
and the latency trade-off sweep.
"""

from .config import TrainConfig, dump_config, load_config, validate_config
from .evaluation import (EvaluationResult, UtteranceResult, decode_utterances, evaluate, infer, split_per,
                         write_posteriorgram_dump)
from .schedule import HalvingSchedule, lr_trace, should_halve
from .sweep import SweepConfig, SweepResult, lag_delay_correlation, reproduce_tradeoff
from .training import TeacherCache, checkpoint_fingerprint, distill, train

__all__ = [
    'EvaluationResult', 'HalvingSchedule', 'SweepConfig', 'SweepResult', 'TeacherCache', 'TrainConfig',
    'UtteranceResult', 'checkpoint_fingerprint', 'decode_utterances', 'distill', 'dump_config', 'evaluate',
    'infer', 'lag_delay_correlation', 'load_config', 'lr_trace', 'reproduce_tradeoff', 'should_halve',
    'split_per', 'train', 'validate_config', 'write_posteriorgram_dump',
]
