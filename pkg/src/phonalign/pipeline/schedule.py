"""
Learning-rate schedule
======================

Starting with a configured epoch, the learning rate is halved after any epoch
whose dev phone error rate went up. "Up" is measured against the previous epoch
(default) or against the best epoch so far.
"""

import logging
from dataclasses import dataclass, field
from typing import List, Literal, Optional, Sequence

Compare = Literal["previous", "best"]


def should_halve(epoch: int, dev_pers: Sequence[Optional[float]], start_epoch: int,
                 compare: Compare = "previous") -> bool:
    """
    Decide whether to halve after `epoch` (1-based).

    Args:
        epoch (int): The epoch that just finished.
        dev_pers: Dev PER of every finished epoch, `dev_pers[-1]` belonging to `epoch`.
        start_epoch (int): First epoch allowed to trigger a halving.
        compare (str): "previous" or "best".
    """
    if epoch < start_epoch or len(dev_pers) < 2:
        return False
    current = dev_pers[-1]
    history = [p for p in dev_pers[:-1] if p is not None]
    if current is None or not history:
        return False
    baseline = history[-1] if compare == "previous" else min(history)
    return current > baseline


@dataclass
class HalvingSchedule:
    """Tracks dev PERs and the current learning rate; the rate never increases."""
    lr: float
    start_epoch: int = 8
    compare: Compare = "previous"
    history: List[Optional[float]] = field(default_factory=list)

    def step(self, epoch: int, dev_per: Optional[float]) -> bool:
        """Record `epoch`'s dev PER; returns True when the rate was halved."""
        self.history.append(dev_per)
        if should_halve(epoch, self.history, self.start_epoch, self.compare):
            self.lr /= 2.0
            logging.info(f"Phonalign: dev PER rose to {dev_per:.2f} after epoch {epoch}, lr -> {self.lr:g}")
            return True
        return False


def lr_trace(initial_lr: float, dev_pers: Sequence[Optional[float]], start_epoch: int,
             compare: Compare = "previous") -> List[float]:
    """Learning rate in effect after each epoch of a given dev PER history."""
    schedule = HalvingSchedule(initial_lr, start_epoch, compare)
    trace = []
    for epoch, value in enumerate(dev_pers, start=1):
        schedule.step(epoch, value)
        trace.append(schedule.lr)
    return trace
