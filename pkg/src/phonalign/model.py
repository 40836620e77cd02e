"""
Acoustic model for Phonalign
============================

Uni- and bi-directional GRU stacks with an inter-layer projection and dropout, the
input frame stacking that feeds them, and the checkpoint container that holds
their weights.

Per layer: GRU (directions concatenated when bidirectional) -> dropout -> linear
projection -> dropout. A final linear map produces V+1 logits with the CTC blank
at index V.
"""

import copy
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from . import numerics as nx
from .errors import PhonalignError, ShapeError
from .numerics import Tensor
from .serialization import read_arrays, write_arrays

BASE_FRAME_SHIFT_MS = 10.0
STACK_SIZE = 3
FRAME_DURATION_MS = STACK_SIZE * BASE_FRAME_SHIFT_MS

# The within-stack orderings used for augmentation: the three cyclic rotations.
CYCLIC_ORDERINGS: Tuple[Tuple[int, int, int], ...] = ((0, 1, 2), (1, 2, 0), (2, 0, 1))

CHECKPOINT_KIND = "checkpoint"


class ModelConfig(BaseModel):
    """Architecture of one recognizer. Output dimension is `vocab_size + 1`."""
    model_config = ConfigDict(extra="forbid", frozen=True)

    layers: int = Field(2, ge=1)
    hidden_per_direction: int = Field(64, ge=1)
    projection: int = Field(32, ge=1)
    dropout: float = Field(0.2, ge=0.0, lt=1.0)
    bidirectional: bool = True
    input_dim: int = Field(120, ge=1)
    vocab_size: int = Field(39, ge=1)

    @property
    def output_dim(self) -> int:
        return self.vocab_size + 1

    @property
    def blank(self) -> int:
        return self.vocab_size

    @property
    def directions(self) -> Tuple[str, ...]:
        return ("fw", "bw") if self.bidirectional else ("fw",)

    @classmethod
    def full_scale(cls, bidirectional: bool = True, **overrides) -> 'ModelConfig':
        """4 layers of 512 units per direction, projection 100, dropout 0.2."""
        values = dict(layers=4, hidden_per_direction=512, projection=100, dropout=0.2,
                      bidirectional=bidirectional)
        values.update(overrides)
        return cls(**values)

    @classmethod
    def desk(cls, bidirectional: bool = True, **overrides) -> 'ModelConfig':
        values = dict(layers=2, hidden_per_direction=64, projection=32, bidirectional=bidirectional)
        values.update(overrides)
        return cls(**values)

    @classmethod
    def student_of(cls, teacher: 'ModelConfig') -> 'ModelConfig':
        """Half the teacher's size: hidden units halved, one direction, all else equal."""
        return teacher.model_copy(update={
            "hidden_per_direction": max(1, teacher.hidden_per_direction // 2),
            "bidirectional": False,
        })


@dataclass
class FeatureSequence:
    """
    One utterance's model input.

    Attributes:
        frames (np.ndarray): T x D stacked frames.
        energies (np.ndarray): Per stacked frame E_t, the mean of its feature values.
        frame_duration_ms (float): Duration of one stacked frame.
    """
    frames: np.ndarray
    energies: np.ndarray
    frame_duration_ms: float = FRAME_DURATION_MS

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float64)
        self.energies = np.asarray(self.energies, dtype=np.float64)
        if self.frames.ndim != 2 or self.frames.shape[0] < 1:
            raise ShapeError(f"FeatureSequence needs T >= 1 frames, got shape {list(self.frames.shape)}")
        if self.energies.shape != (self.frames.shape[0],):
            raise ShapeError(
                f"FeatureSequence: {self.energies.shape[0]} energies for {self.frames.shape[0]} frames")
        if not np.isfinite(self.energies).all():
            raise ShapeError("FeatureSequence: energies must be finite")

    @property
    def num_frames(self) -> int:
        return int(self.frames.shape[0])

    @property
    def dim(self) -> int:
        return int(self.frames.shape[1])

    @classmethod
    def from_base_frames(cls, base_frames, ordering: Sequence[int] = (0, 1, 2)) -> 'FeatureSequence':
        stacked = stack_frames(base_frames, ordering)
        return cls(frames=stacked, energies=stacked.mean(axis=1))

    def prefix(self, length: int) -> 'FeatureSequence':
        return FeatureSequence(self.frames[:length], self.energies[:length], self.frame_duration_ms)


def stack_frames(base_frames, ordering: Sequence[int] = (0, 1, 2)) -> np.ndarray:
    """
    Concatenate every three consecutive base frames into one stacked frame.

    A base frame count not divisible by three is padded by repeating the final frame.

    Args:
        base_frames: 3T x d array (or Tensor).
        ordering: Permutation of (0, 1, 2) giving the within-stack order.

    Returns:
        np.ndarray: T x 3d stacked frames.
    """
    base = np.asarray(getattr(base_frames, "values", base_frames), dtype=np.float64)
    if base.ndim != 2 or base.shape[0] == 0:
        raise ShapeError(f"stack_frames needs a non-empty 2-D input, got shape {list(base.shape)}")
    if sorted(ordering) != [0, 1, 2]:
        raise ShapeError(f"stack_frames: ordering {tuple(ordering)} is not a permutation of (0, 1, 2)")
    remainder = base.shape[0] % STACK_SIZE
    if remainder:
        pad = np.repeat(base[-1:], STACK_SIZE - remainder, axis=0)
        base = np.concatenate([base, pad], axis=0)
    groups = base.reshape(-1, STACK_SIZE, base.shape[1])
    return groups[:, list(ordering), :].reshape(groups.shape[0], -1)


@dataclass
class GRUWeights:
    """Gate weights for one direction of one layer, gates ordered (update, reset, candidate)."""
    W: Tensor  # d_in x 3h
    U: Tensor  # h x 3h
    b: Tensor  # 3h

    @property
    def hidden(self) -> int:
        return self.U.shape[0]


def gru_layer_forward(weights: GRUWeights, inputs: Tensor, direction: str = "forward") -> Tensor:
    """
    Run a GRU over a T x d_in sequence from a zero initial state.

        z = sigmoid(x W_z + h U_z + b_z)
        r = sigmoid(x W_r + h U_r + b_r)
        n = tanh(x W_n + (r * h) U_n + b_n)
        h' = (1 - z) * n + z * h

    The backward direction runs over the reversed sequence and re-reverses the output.

    Returns:
        Tensor: T x hidden states.
    """
    if direction not in ("forward", "backward"):
        raise PhonalignError(f"unknown GRU direction {direction!r}")
    hidden = weights.hidden
    d_in = inputs.shape[1] if len(inputs.shape) == 2 else -1
    if (weights.W.shape != [d_in, 3 * hidden] or weights.U.shape != [hidden, 3 * hidden]
            or weights.b.shape != [3 * hidden]):
        raise ShapeError(
            f"GRU weights {weights.W.shape}/{weights.U.shape}/{weights.b.shape} do not fit "
            f"input {inputs.shape} with hidden {hidden}")

    sequence = nx.reverse_rows(inputs) if direction == "backward" else inputs
    U_zr = nx.slice_cols(weights.U, 0, 2 * hidden)
    U_n = nx.slice_cols(weights.U, 2 * hidden, 3 * hidden)
    h = Tensor(np.zeros(hidden))
    states = []
    for t in range(sequence.shape[0]):
        gx = nx.add(nx.matmul(nx.take_row(sequence, t), weights.W), weights.b)
        zr = nx.sigmoid(nx.add(nx.slice_cols(gx, 0, 2 * hidden), nx.matmul(h, U_zr)))
        z = nx.slice_cols(zr, 0, hidden)
        r = nx.slice_cols(zr, hidden, 2 * hidden)
        n = nx.tanh(nx.add(nx.slice_cols(gx, 2 * hidden, 3 * hidden), nx.matmul(nx.mul(r, h), U_n)))
        h = nx.add(n, nx.mul(z, nx.sub(h, n)))
        states.append(h)
    output = nx.stack_rows(states)
    return nx.reverse_rows(output) if direction == "backward" else output


def dropout(x: Tensor, rate: float, rng: np.random.Generator) -> Tensor:
    """Inverted dropout: zero each activation with probability `rate`, rescale the rest."""
    if rate <= 0.0:
        return x
    keep = 1.0 - rate
    mask = (rng.random(x.values.shape) < keep) / keep
    return nx.mul(x, Tensor(mask))


def _linear(x: Tensor, W: Tensor, b: Tensor) -> Tensor:
    """Row-by-row affine map, so every output row depends only on its input row."""
    rows = [nx.add(nx.matmul(nx.take_row(x, t), W), b) for t in range(x.shape[0])]
    return nx.stack_rows(rows)


def _weight_shapes(config: ModelConfig) -> List[Tuple[str, Tuple[int, ...], int]]:
    """(name, shape, fan_in) for every parameter, in a fixed order."""
    shapes = []
    d_in = config.input_dim
    h = config.hidden_per_direction
    for layer in range(config.layers):
        for direction in config.directions:
            prefix = f"layer{layer}.{direction}"
            shapes.append((f"{prefix}.W", (d_in, 3 * h), d_in))
            shapes.append((f"{prefix}.U", (h, 3 * h), h))
            shapes.append((f"{prefix}.b", (3 * h,), d_in))
        gru_out = h * len(config.directions)
        shapes.append((f"layer{layer}.proj.W", (gru_out, config.projection), gru_out))
        shapes.append((f"layer{layer}.proj.b", (config.projection,), gru_out))
        d_in = config.projection
    shapes.append(("output.W", (config.projection, config.output_dim), config.projection))
    shapes.append(("output.b", (config.output_dim,), config.projection))
    return shapes


def init_weights(config: ModelConfig, seed: int) -> Dict[str, Tensor]:
    """Uniform in +/- sqrt(1 / fan_in) per weight matrix (biases use their matrix's fan-in)."""
    rng = np.random.default_rng(seed)
    weights = {}
    for name, shape, fan_in in _weight_shapes(config):
        bound = np.sqrt(1.0 / fan_in)
        weights[name] = Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True, name=name)
    return weights


@dataclass
class Checkpoint:
    """
    A model: its config, named weights and training provenance.

    Immutable after load for inference; training mutates one checkpoint in place.
    """
    config: ModelConfig
    weights: Dict[str, Tensor]
    metadata: Dict[str, Any] = field(default_factory=dict)
    format_version: int = 1

    @classmethod
    def initialize(cls, config: ModelConfig, seed: int = 0, **metadata) -> 'Checkpoint':
        return cls(config=config, weights=init_weights(config, seed),
                   metadata={"seed": seed, "epoch": 0, **metadata})

    def parameters(self) -> List[Tensor]:
        return [self.weights[name] for name in sorted(self.weights)]

    def clone(self) -> 'Checkpoint':
        weights = {}
        for name, tensor in self.weights.items():
            weights[name] = Tensor(tensor.values.copy(), requires_grad=tensor.requires_grad, name=name)
        return Checkpoint(self.config, weights, copy.deepcopy(self.metadata), self.format_version)

    def gru(self, layer: int, direction: str) -> GRUWeights:
        prefix = f"layer{layer}.{direction}"
        return GRUWeights(self.weights[f"{prefix}.W"], self.weights[f"{prefix}.U"], self.weights[f"{prefix}.b"])

    def save(self, path: Union[str, Path]):
        meta = {
            "format_version": self.format_version,
            "config": self.config.model_dump(mode="json"),
            "metadata": self.metadata,
        }
        arrays = {name: self.weights[name].values for name in sorted(self.weights)}
        write_arrays(path, arrays, kind=CHECKPOINT_KIND, meta=meta)
        logging.info(f"Phonalign: saved checkpoint to {path}")

    @classmethod
    def load(cls, path: Union[str, Path]) -> 'Checkpoint':
        meta, arrays = read_arrays(path, kind=CHECKPOINT_KIND)
        config = ModelConfig(**meta["config"])
        expected = {name: shape for name, shape, _ in _weight_shapes(config)}
        if set(arrays) != set(expected):
            raise ShapeError(f"{path}: weight names do not match the stored config")
        weights = {name: Tensor(a, requires_grad=True, name=name) for name, a in arrays.items()}
        return cls(config=config, weights=weights, metadata=meta.get("metadata", {}),
                   format_version=meta.get("format_version", 1))


def model_forward(checkpoint: Checkpoint, features: FeatureSequence, train_mode: bool = False,
                  rng: Optional[np.random.Generator] = None) -> Tensor:
    """
    Compute T x (V+1) logits for one utterance.

    Args:
        checkpoint (Checkpoint): Model weights and config.
        features (FeatureSequence): Stacked input frames.
        train_mode (bool): Apply dropout. Inference (False) is deterministic.
        rng (np.random.Generator, optional): Dropout sampler, required in train mode.

    Raises:
        ShapeError: If the feature dimension does not match `config.input_dim`.
    """
    config = checkpoint.config
    if features.dim != config.input_dim:
        raise ShapeError(f"feature dim {features.dim} != model input_dim {config.input_dim}")
    use_dropout = train_mode and config.dropout > 0.0
    if use_dropout and rng is None:
        raise PhonalignError("model_forward: train_mode with dropout needs an rng")

    x = Tensor(features.frames)
    for layer in range(config.layers):
        outputs = [gru_layer_forward(checkpoint.gru(layer, direction), x,
                                     "forward" if direction == "fw" else "backward")
                   for direction in config.directions]
        x = nx.concat_cols(outputs) if len(outputs) > 1 else outputs[0]
        if use_dropout:
            x = dropout(x, config.dropout, rng)
        x = _linear(x, checkpoint.weights[f"layer{layer}.proj.W"], checkpoint.weights[f"layer{layer}.proj.b"])
        if use_dropout:
            x = dropout(x, config.dropout, rng)
    return _linear(x, checkpoint.weights["output.W"], checkpoint.weights["output.b"])
