"""
Numerics for Phonalign
======================

Dense double-precision tensors with a reverse-mode tape, the Adam optimizer and a
finite-difference gradient checker.

The tape records a fixed vocabulary of ops (matmul, add/sub/mul, sigmoid, tanh,
row softmax / log-softmax, row and column gathers, stacking, reductions) plus
`attach_loss`, which splices an analytically differentiated scalar (CTC, alignment
and teacher-student terms) into the graph.

Example:
    >>> w = Tensor(np.ones((2, 2)), requires_grad=True)
    >>> with Tape() as tape:
    ...     loss = sum_all(matmul(Tensor(np.ones(2)), w))
    >>> grads = tape.backward(loss)
    >>> grads[w]
    array([[1., 1.],
           [1., 1.]])
"""

import contextvars
import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import expit, log_softmax, logsumexp, softmax

from .errors import NonFiniteError, PhonalignError, ShapeError

# The tape ops record into, if any. Each thread starts with no tape, so batch
# members processed on worker threads get independent tapes.
_current_tape = contextvars.ContextVar('current_tape', default=None)


class Tensor:
    """
    A dense float64 array with an optional gradient buffer.

    Args:
        values: Anything `np.asarray` accepts; stored as a float64 array.
        requires_grad (bool): Whether ops on this tensor are recorded on the tape.
        name (str, optional): Parameter name, used in error messages.
    """

    __slots__ = ("values", "grad", "requires_grad", "name")

    def __init__(self, values, requires_grad: bool = False, name: Optional[str] = None):
        self.values = np.array(values, dtype=np.float64)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self) -> List[int]:
        return list(self.values.shape)

    @property
    def size(self) -> int:
        return int(self.values.size)

    def zero_grad(self):
        self.grad = np.zeros_like(self.values)

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{label}, requires_grad={self.requires_grad})"


@dataclass
class _Node:
    output: Tensor
    inputs: Tuple[Tensor, ...]
    backward: Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


class Gradients:
    """Gradients produced by one backward pass, keyed by tensor identity."""

    def __init__(self, by_id: Dict[int, np.ndarray], tensors: Dict[int, Tensor]):
        self._by_id = by_id
        self._tensors = tensors

    def __getitem__(self, tensor: Tensor) -> np.ndarray:
        grad = self._by_id.get(id(tensor))
        if grad is None:
            return np.zeros_like(tensor.values)
        return grad

    def __contains__(self, tensor: Tensor) -> bool:
        return id(tensor) in self._by_id

    def accumulate(self, params: Iterable[Tensor], scale: float = 1.0):
        """
        Add these gradients (times `scale`) into each parameter's `grad` buffer.

        This is the serialized reduction step: call it from one thread only.
        """
        for param in params:
            grad = self._by_id.get(id(param))
            if grad is None:
                continue
            if param.grad is None:
                param.grad = scale * grad
            else:
                param.grad += scale * grad


class Tape:
    """
    Records differentiable ops executed inside its `with` block.

    A tape is single-writer; use one per thread.
    """

    def __init__(self):
        self.nodes: List[_Node] = []
        self._token = None

    def __enter__(self) -> 'Tape':
        self._token = _current_tape.set(self)
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        _current_tape.reset(self._token)
        self._token = None
        return False

    def record(self, output: Tensor, inputs: Tuple[Tensor, ...], backward):
        self.nodes.append(_Node(output, inputs, backward))

    def backward(self, loss: Tensor) -> Gradients:
        """
        Run reverse-mode differentiation from a scalar `loss`.

        Returns:
            Gradients: d loss / d tensor for every recorded tensor that requires grad.
        """
        if loss.size != 1:
            raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
        grads: Dict[int, np.ndarray] = {id(loss): np.ones_like(loss.values)}
        tensors: Dict[int, Tensor] = {id(loss): loss}
        for node in reversed(self.nodes):
            upstream = grads.get(id(node.output))
            if upstream is None:
                continue
            for tensor, grad in zip(node.inputs, node.backward(upstream)):
                if grad is None or not tensor.requires_grad:
                    continue
                key = id(tensor)
                if key in grads:
                    grads[key] = grads[key] + grad
                else:
                    grads[key] = grad
                    tensors[key] = tensor
        return Gradients(grads, tensors)


def current_tape() -> Optional[Tape]:
    """Return the tape recording in the current context, if any."""
    return _current_tape.get()


def _result(values: np.ndarray, inputs: Tuple[Tensor, ...], backward) -> Tensor:
    out = Tensor(values, requires_grad=any(t.requires_grad for t in inputs))
    tape = _current_tape.get()
    if tape is not None and out.requires_grad:
        tape.record(out, inputs, backward)
    return out


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


# --- Op vocabulary ---

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Vector-matrix or matrix-matrix product `a @ b`."""
    if b.values.ndim != 2 or a.values.shape[-1] != b.values.shape[0]:
        raise ShapeError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    a_values, b_values = a.values, b.values

    def backward(g):
        grad_a = g @ b_values.T
        if a_values.ndim == 1:
            grad_b = np.outer(a_values, g)
        else:
            grad_b = a_values.T @ g
        return grad_a, grad_b

    return _result(a_values @ b_values, (a, b), backward)


def add(a: Tensor, b: Tensor) -> Tensor:
    shape_a, shape_b = a.values.shape, b.values.shape
    return _result(a.values + b.values, (a, b),
                   lambda g: (_unbroadcast(g, shape_a), _unbroadcast(g, shape_b)))


def sub(a: Tensor, b: Tensor) -> Tensor:
    shape_a, shape_b = a.values.shape, b.values.shape
    return _result(a.values - b.values, (a, b),
                   lambda g: (_unbroadcast(g, shape_a), _unbroadcast(-g, shape_b)))


def mul(a: Tensor, b: Tensor) -> Tensor:
    a_values, b_values = a.values, b.values
    return _result(a_values * b_values, (a, b),
                   lambda g: (_unbroadcast(g * b_values, a_values.shape),
                              _unbroadcast(g * a_values, b_values.shape)))


def scale(a: Tensor, factor: float) -> Tensor:
    return _result(a.values * factor, (a,), lambda g: (g * factor,))


def sigmoid(a: Tensor) -> Tensor:
    y = expit(a.values)
    return _result(y, (a,), lambda g: (g * y * (1.0 - y),))


def tanh(a: Tensor) -> Tensor:
    y = np.tanh(a.values)
    return _result(y, (a,), lambda g: (g * (1.0 - y * y),))


def _check_rows_finite(values: np.ndarray, op: str):
    if values.ndim != 2:
        raise ShapeError(f"{op} expects a T x K matrix, got shape {list(values.shape)}")
    finite = np.isfinite(values).all(axis=1)
    if not finite.all():
        row = int(np.flatnonzero(~finite)[0])
        raise NonFiniteError(f"{op}: non-finite value in row {row}")


def softmax_rows(logits: Tensor) -> Tensor:
    """
    Row-wise softmax of a T x K matrix (max-subtracted for stability).

    Raises:
        NonFiniteError: If a row contains NaN or infinity; the message names the row.
    """
    _check_rows_finite(logits.values, "softmax_rows")
    y = softmax(logits.values, axis=1)
    return _result(y, (logits,),
                   lambda g: (y * (g - np.sum(g * y, axis=1, keepdims=True)),))


def log_softmax_rows(logits: Tensor) -> Tensor:
    """Row-wise log-softmax of a T x K matrix."""
    _check_rows_finite(logits.values, "log_softmax_rows")
    y = log_softmax(logits.values, axis=1)
    return _result(y, (logits,),
                   lambda g: (g - np.exp(y) * np.sum(g, axis=1, keepdims=True),))


def take_row(a: Tensor, index: int) -> Tensor:
    """Gather row `index` of a matrix as a vector."""
    shape = a.values.shape

    def backward(g):
        grad = np.zeros(shape)
        grad[index] = g
        return (grad,)

    return _result(a.values[index], (a,), backward)


def slice_cols(a: Tensor, start: int, stop: int) -> Tensor:
    """Gather columns `start:stop` along the last axis."""
    shape = a.values.shape

    def backward(g):
        grad = np.zeros(shape)
        grad[..., start:stop] = g
        return (grad,)

    return _result(a.values[..., start:stop], (a,), backward)


def stack_rows(rows: Sequence[Tensor]) -> Tensor:
    """Stack equal-length vectors into a matrix, one per row."""
    return _result(np.stack([r.values for r in rows]), tuple(rows),
                   lambda g: tuple(g[i] for i in range(len(rows))))


def concat_cols(parts: Sequence[Tensor]) -> Tensor:
    """Concatenate along the last axis."""
    bounds = np.cumsum([0] + [p.values.shape[-1] for p in parts])
    return _result(np.concatenate([p.values for p in parts], axis=-1), tuple(parts),
                   lambda g: tuple(g[..., bounds[i]:bounds[i + 1]] for i in range(len(parts))))


def reverse_rows(a: Tensor) -> Tensor:
    return _result(a.values[::-1].copy(), (a,), lambda g: (g[::-1].copy(),))


def sum_all(a: Tensor) -> Tensor:
    shape = a.values.shape
    return _result(np.array(a.values.sum()), (a,), lambda g: (np.full(shape, float(g)),))


def mean_all(a: Tensor) -> Tensor:
    return scale(sum_all(a), 1.0 / a.size)


def attach_loss(value: float, pairs: Sequence[Tuple[Tensor, np.ndarray]]) -> Tensor:
    """
    Splice an externally computed scalar into the tape.

    Args:
        value (float): The loss value.
        pairs: (tensor, d value / d tensor) for every tensor the value depends on.

    Returns:
        Tensor: A scalar whose backward pass routes the given gradients upstream.
    """
    tensors = tuple(t for t, _ in pairs)
    grads = [np.asarray(g, dtype=np.float64) for _, g in pairs]
    for tensor, grad in zip(tensors, grads):
        if grad.shape != tensor.values.shape:
            raise ShapeError(
                f"attach_loss: gradient shape {list(grad.shape)} != tensor shape {tensor.shape}")
    return _result(np.array(float(value)), tensors,
                   lambda g: tuple(float(g) * grad for grad in grads))


def log_sum_exp(values) -> float:
    """
    Stable log(sum(exp(values))).

    Raises:
        ShapeError: If `values` is empty.
    """
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise ShapeError("log_sum_exp of an empty array")
    if values.size == 1:
        return float(values.reshape(-1)[0])
    return float(logsumexp(values))


# --- Optimizer ---

@dataclass
class AdamState:
    """
    Moment estimates for one parameter tensor.

    Only lr=0.0005 is prescribed by the recipe; beta1, beta2 and eps are Adam's usual defaults.
    """
    m: np.ndarray
    v: np.ndarray
    step: int = 0
    lr: float = 0.0005
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_tensor(cls, tensor: Tensor, lr: float = 0.0005, **kwargs) -> 'AdamState':
        return cls(m=np.zeros(tensor.size), v=np.zeros(tensor.size), lr=lr, **kwargs)


def adam_step(params: Tensor, state: AdamState) -> Tuple[Tensor, AdamState]:
    """
    Apply one bias-corrected Adam update in place, then zero the gradient buffer.

    Raises:
        PhonalignError: If `params.grad` is missing.
        ShapeError: If the state arrays are not sized to the parameters.
    """
    if params.grad is None:
        raise PhonalignError(f"adam_step: no gradient on {params!r}")
    if state.m.size != params.size or state.v.size != params.size or params.grad.size != params.size:
        raise ShapeError(
            f"adam_step: state sized {state.m.size}/{state.v.size}, parameters {params.size}")
    grad = params.grad.reshape(-1)
    state.step += 1
    state.m *= state.beta1
    state.m += (1.0 - state.beta1) * grad
    state.v *= state.beta2
    state.v += (1.0 - state.beta2) * (grad * grad)
    m_hat = state.m / (1.0 - state.beta1 ** state.step)
    v_hat = state.v / (1.0 - state.beta2 ** state.step)
    update = state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    params.values -= update.reshape(params.values.shape)
    params.zero_grad()
    return params, state


@dataclass
class Adam:
    """Adam over a named parameter map, one `AdamState` per tensor."""
    lr: float = 0.0005
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    states: Dict[str, AdamState] = field(default_factory=dict)

    def step(self, params: Dict[str, Tensor]):
        for name, tensor in params.items():
            if name not in self.states:
                self.states[name] = AdamState.for_tensor(
                    tensor, lr=self.lr, beta1=self.beta1, beta2=self.beta2, eps=self.eps)
            if tensor.grad is None:
                tensor.zero_grad()
            adam_step(tensor, self.states[name])

    def set_lr(self, lr: float):
        self.lr = lr
        for state in self.states.values():
            state.lr = lr


# --- Verification ---

def _scalar(loss) -> float:
    value = float(np.asarray(getattr(loss, "values", loss)).reshape(-1)[0])
    if not np.isfinite(value):
        raise NonFiniteError(f"gradient_check: loss is not finite ({value})")
    return value


def gradient_check(loss_fn: Callable[[], Tensor], params: Tensor, probe_count: int = 50,
                   h: float = 1e-5, rng: Optional[np.random.Generator] = None) -> float:
    """
    Compare tape gradients against central finite differences.

    `loss_fn` must rebuild the loss from the current `params.values` on every call.

    Args:
        loss_fn: Zero-argument callable returning a scalar Tensor.
        params (Tensor): The tensor to probe; its values are perturbed in place and restored.
        probe_count (int): Number of randomly sampled coordinates.
        h (float): Finite-difference step.
        rng (np.random.Generator, optional): Coordinate sampler.

    Returns:
        float: Max relative error, |a - b| / max(|a|, |b|, 1e-8).
    """
    if h <= 0:
        raise PhonalignError(f"gradient_check: h must be positive, got {h}")
    rng = rng if rng is not None else np.random.default_rng(0)
    with Tape() as tape:
        loss = loss_fn()
    _scalar(loss)
    analytic = tape.backward(loss)[params].reshape(-1)

    flat = params.values.reshape(-1)
    count = min(probe_count, flat.size)
    worst = 0.0
    for index in rng.choice(flat.size, size=count, replace=False):
        original = flat[index]
        flat[index] = original + h
        plus = _scalar(loss_fn())
        flat[index] = original - h
        minus = _scalar(loss_fn())
        flat[index] = original
        numeric = (plus - minus) / (2.0 * h)
        a = analytic[index]
        error = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
        worst = max(worst, error)
    logging.debug(f"Phonalign: gradient_check probed {count} coordinates, max rel error {worst:.3e}")
    return worst
