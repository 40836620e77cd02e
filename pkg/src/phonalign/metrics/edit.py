"""
Edit distance and phone error rates
===================================

Levenshtein alignment of a hypothesis against a reference phoneme sequence, the
phone error rate over correct/incorrect subsets, and the distance-threshold rule
that turns a decode into a pronunciation verdict.
"""

from typing import Iterable, NamedTuple, Sequence, Tuple, Union

import numpy as np

from ..errors import ConfigError, EmptySubsetError, ShapeError

CORRECT = "correct"
MISPRONOUNCED = "mispronounced"

SUBSETS = ("all", "correct", "incorrect")


class EditOps(NamedTuple):
    """Distance plus the operation counts of one optimal alignment."""
    distance: int
    substitutions: int
    insertions: int
    deletions: int


def edit_distance(hyp: Sequence[int], ref: Sequence[int]) -> EditOps:
    """
    Unit-cost Levenshtein distance from `ref` to `hyp`.

    An insertion is a hypothesis symbol with no reference counterpart, a deletion
    a reference symbol missing from the hypothesis. Ties in the backtrace prefer
    substitution, then deletion, then insertion.

    Args:
        hyp: Hypothesis phoneme ids (may be empty).
        ref: Reference phoneme ids (may be empty).

    Returns:
        EditOps: (distance, substitutions, insertions, deletions).
    """
    hyp, ref = list(hyp), list(ref)
    n, m = len(ref), len(hyp)
    cost = np.zeros((n + 1, m + 1), dtype=np.int64)
    cost[:, 0] = np.arange(n + 1)
    cost[0, :] = np.arange(m + 1)
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            diagonal = cost[i - 1, j - 1] + (ref[i - 1] != hyp[j - 1])
            cost[i, j] = min(diagonal, cost[i - 1, j] + 1, cost[i, j - 1] + 1)

    subs = ins = dels = 0
    i, j = n, m
    while i > 0 or j > 0:
        if i > 0 and j > 0 and cost[i, j] == cost[i - 1, j - 1] + (ref[i - 1] != hyp[j - 1]):
            subs += int(ref[i - 1] != hyp[j - 1])
            i, j = i - 1, j - 1
        elif i > 0 and cost[i, j] == cost[i - 1, j] + 1:
            dels += 1
            i -= 1
        else:
            ins += 1
            j -= 1
    return EditOps(int(cost[n, m]), subs, ins, dels)


class ScoredPair(NamedTuple):
    hyp: Tuple[int, ...]
    ref: Tuple[int, ...]
    quality_label: int = 1


def _in_subset(label: int, subset: str) -> bool:
    if subset == "all":
        return True
    return (label == 1) == (subset == "correct")


def per(pairs: Iterable[Union[ScoredPair, Tuple]], subset: str = "all") -> float:
    """
    Phone error rate in percent: 100 x total distance / total reference length.

    Args:
        pairs: (hyp, ref) or (hyp, ref, quality_label) items; a missing label counts as 1.
        subset (str): "all", "correct" (label 1) or "incorrect" (labels 2-4).

    Raises:
        EmptySubsetError: If no pair falls in `subset`.
        ShapeError: If a reference is empty.
    """
    if subset not in SUBSETS:
        raise ConfigError(f"unknown PER subset {subset!r}; expected one of {SUBSETS}")
    distance = length = count = 0
    for item in pairs:
        pair = ScoredPair(*item)
        if not _in_subset(pair.quality_label, subset):
            continue
        if not pair.ref:
            raise ShapeError("per: reference sequences must be non-empty")
        distance += edit_distance(pair.hyp, pair.ref).distance
        length += len(pair.ref)
        count += 1
    if count == 0:
        raise EmptySubsetError(f"per: no utterances in subset {subset!r}")
    return 100.0 * distance / length


def mdd_classify(hyp: Sequence[int], canonical: Sequence[int], threshold: int = 1) -> str:
    """Mispronounced iff the decode is more than `threshold` edits from the canonical sequence."""
    return MISPRONOUNCED if edit_distance(hyp, canonical).distance > threshold else CORRECT
