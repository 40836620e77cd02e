"""
Loss recipes
============

Declarative description of which loss terms a run uses and how they are weighted.

Recipe strings accepted everywhere a loss is configured:

    ctc          L_CTC
    align        L_CTC + alignment penalty
    ts           L_CTC + frame-level teacher-student MSE
    ts+align     L_CTC + alignment penalty + teacher-student MSE (one copy of L_CTC)
    ts-best:N    L_CTC + windowed teacher-student, best frame in the window
    ts-avg:N     L_CTC + windowed teacher-student, average over the window

A signed N selects the window side: -6 compares each student frame with teacher
frames [i-6, i], +3 with [i, i+3]. Offset 0 is always part of the window.
"""

import re
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from ..errors import ConfigError

_WINDOW_RECIPE = re.compile(r"^ts-(best|avg):([+-]?\d+)$")


class WindowSpec(BaseModel):
    """Signed teacher-frame offsets [lo, hi] relative to each student frame."""
    model_config = ConfigDict(extra="forbid", frozen=True)

    lo: int = 0
    hi: int = 0
    mode: Literal["best", "avg"] = "avg"

    @model_validator(mode="after")
    def _ordered(self):
        if self.lo > self.hi:
            raise ValueError(f"window lo={self.lo} > hi={self.hi}")
        return self

    @classmethod
    def from_offset(cls, offset: int, mode: str = "avg") -> 'WindowSpec':
        """TS-x:-N -> [-N, 0]; TS-x:+N -> [0, +N]."""
        return cls(lo=min(offset, 0), hi=max(offset, 0), mode=mode)

    @property
    def offset(self) -> int:
        return self.lo if self.lo < 0 else self.hi

    @property
    def lag(self) -> float:
        """Minus the window center: positive when the window reaches into past teacher frames."""
        return -(self.lo + self.hi) / 2.0

    @property
    def recipe(self) -> str:
        sign = "+" if self.offset > 0 else ""
        return f"ts-{self.mode}:{sign}{self.offset}"


class TeacherSpec(BaseModel):
    """Teacher-student term settings; `window=None` means frame-level matching."""
    model_config = ConfigDict(extra="forbid", frozen=True)

    teacher_checkpoint: Optional[str] = None
    window: Optional[WindowSpec] = None


class LossWeights(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    ctc: float = 1.0
    align: float = 1.0
    ts: float = 1.0


class LossConfig(BaseModel):
    """Which terms are enabled, the alignment clamp and per-term weights."""
    model_config = ConfigDict(extra="forbid", frozen=True)

    name: Optional[str] = None
    use_ctc: bool = True
    use_align: bool = False
    align_clamp: float = Field(1e-8, gt=0.0, lt=1.0)
    ts: Optional[TeacherSpec] = None
    weights: LossWeights = LossWeights()

    @model_validator(mode="after")
    def _at_least_one_term(self):
        if not (self.use_ctc or self.use_align or self.ts is not None):
            raise ValueError("a loss config needs at least one enabled term")
        return self

    @property
    def recipe(self) -> str:
        if self.name:
            return self.name
        parts = []
        if self.ts is not None:
            parts.append(self.ts.window.recipe if self.ts.window else "ts")
        if self.use_align:
            parts.append("align")
        return "+".join(parts) or "ctc"

    @property
    def needs_teacher(self) -> bool:
        return self.ts is not None

    @classmethod
    def from_recipe(cls, recipe: str, teacher_checkpoint: Optional[str] = None, **overrides) -> 'LossConfig':
        """
        Build a config from a recipe name.

        Raises:
            ConfigError: If the recipe is not one of the accepted names, or the
                window or an override fails validation.
        """
        key = recipe.strip().lower()
        if key == "ctc":
            values = dict(use_ctc=True)
        elif key == "align":
            values = dict(use_ctc=True, use_align=True)
        elif key == "ts":
            values = dict(use_ctc=True, ts=TeacherSpec(teacher_checkpoint=teacher_checkpoint))
        elif key in ("ts+align", "align+ts"):
            values = dict(use_ctc=True, use_align=True,
                          ts=TeacherSpec(teacher_checkpoint=teacher_checkpoint))
        else:
            match = _WINDOW_RECIPE.match(key)
            if not match:
                raise ConfigError(
                    f"unknown loss recipe {recipe!r}; expected ctc, align, ts, ts+align, "
                    f"ts-best:N or ts-avg:N")
            try:
                window = WindowSpec.from_offset(int(match.group(2)), match.group(1))
            except ValidationError as e:
                raise ConfigError(f"invalid window in loss recipe {recipe!r}: {e}") from e
            values = dict(use_ctc=True,
                          ts=TeacherSpec(teacher_checkpoint=teacher_checkpoint, window=window))
            key = window.recipe
        values.update(overrides)
        try:
            return cls(name=key, **values)
        except ValidationError as e:
            raise ConfigError(f"invalid loss config for recipe {recipe!r}: {e}") from e

    def with_teacher(self, teacher_checkpoint: str) -> 'LossConfig':
        if self.ts is None:
            raise ConfigError(f"loss {self.recipe!r} has no teacher-student term")
        return self.model_copy(update={"ts": self.ts.model_copy(update={"teacher_checkpoint": teacher_checkpoint})})
