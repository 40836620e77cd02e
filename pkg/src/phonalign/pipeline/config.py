"""
Pipeline configuration
======================

`TrainConfig` plus the YAML loader shared by the CLI and the recipe runner.
Loss recipes may be written as a recipe string (``loss: "ts-avg:-6"``) or as an
explicit `LossConfig` mapping.
"""

from pathlib import Path
from typing import Literal, Optional, Type, TypeVar, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from ..data import CorpusConfig
from ..errors import ConfigError
from ..losses import LossConfig
from ..model import ModelConfig

ConfigT = TypeVar("ConfigT", bound=BaseModel)


def coerce_loss(value):
    """Accept a recipe string wherever a LossConfig is expected."""
    if isinstance(value, str):
        return LossConfig.from_recipe(value)
    return value


class TrainConfig(BaseModel):
    """
    One training run.

    The learning rate halves after any epoch from `lr_halving_start_epoch` on
    whose dev PER rose (against the previous or the best epoch).
    """
    model_config = ConfigDict(extra="forbid", frozen=True)

    model: ModelConfig = ModelConfig()
    loss: LossConfig = LossConfig()
    epochs: int = Field(25, ge=0)
    lr: float = Field(0.0005, gt=0.0)
    lr_halving_start_epoch: int = Field(8, ge=1)
    lr_halving_compare: Literal["previous", "best"] = "previous"
    batch_size: int = Field(16, ge=1)
    seed: int = 0
    corpus: Optional[CorpusConfig] = None
    augmentation: bool = False
    workers: int = Field(1, ge=1)
    dev_limit: Optional[int] = Field(None, ge=1)

    @field_validator("loss", mode="before")
    @classmethod
    def _recipe_string(cls, value):
        return coerce_loss(value)

    def with_loss(self, loss: Union[str, LossConfig]) -> 'TrainConfig':
        return self.model_copy(update={"loss": coerce_loss(loss)})


def load_config(path: Union[str, Path], model: Type[ConfigT]) -> ConfigT:
    """
    Parse a YAML file and validate it against `model`.

    Raises:
        ConfigError: Unreadable YAML, unknown keys or invalid values.
    """
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
    except (OSError, yaml.YAMLError) as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must be a mapping, got {type(data).__name__}")
    return validate_config(data, model, source=str(path))


def validate_config(data: dict, model: Type[ConfigT], source: str = "config") -> ConfigT:
    try:
        return model(**data)
    except ValidationError as e:
        raise ConfigError(f"invalid {model.__name__} in {source}: {e}") from e


def dump_config(config: BaseModel, path: Union[str, Path]):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(yaml.safe_dump(config.model_dump(mode="json"), sort_keys=False), encoding="utf-8")
