#!/usr/bin/env python3
"""
Tensor Module

Dense batch-channel-height-width tensors backed by numpy, a reverse-mode
autodiff tape, and the named parameter registry used by the models.

Every differentiable op builds its output through `_record`, which attaches
a TapeNode holding the op's inputs, cached values and backward rule.
`forward_backward` walks the graph once in reverse topological order and
sums gradients over all paths. Training runs in float32; float64 is used
for gradient checking.
"""

import itertools
import logging
import threading
from collections import OrderedDict
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from .errors import NumericFailureError, ShapeError

logger = logging.getLogger(__name__)

DEFAULT_DTYPE = np.float32
CHECK_DTYPE = np.float64

_node_ids = itertools.count()
_state = threading.local()


def grad_enabled() -> bool:
    """Whether ops on the current thread record onto the tape."""
    return getattr(_state, "grad_enabled", True)


@contextmanager
def no_grad():
    """Disable tape recording on the current thread (evaluation, updates)."""
    previous = grad_enabled()
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = previous


BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


@dataclass
class TapeNode:
    """One recorded op: its inputs, cached values and backward rule."""

    op_kind: str
    inputs: Tuple["Tensor", ...]
    backward: BackwardFn
    saved: Dict[str, Any] = field(default_factory=dict)
    node_id: int = field(default_factory=lambda: next(_node_ids))

    @property
    def label(self) -> str:
        return f"{self.op_kind}#{self.node_id}"


class Tensor:
    """A 4-D (N, C, H, W) array, or a 0-d scalar for losses."""

    def __init__(self, data, requires_grad: bool = False, name: Optional[str] = None, dtype=None):
        """Wrap data as a contiguous float array."""
        array = np.asarray(data, dtype=dtype if dtype is not None else _infer_dtype(data))
        # ascontiguousarray promotes 0-d to 1-d
        if array.ndim > 0:
            array = np.ascontiguousarray(array)
        if array.ndim not in (0, 4):
            raise ShapeError(f"tensors are 4-D (N, C, H, W) or scalar, got shape {array.shape}")
        self.data = array
        self.requires_grad = requires_grad
        self.name = name
        self.grad: Optional[np.ndarray] = None
        self.node: Optional[TapeNode] = None

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float("nan")

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        return Tensor(self.data, dtype=self.data.dtype)

    def __add__(self, other: "Tensor") -> "Tensor":
        return elementwise_add(self, other)

    def __mul__(self, other: "Tensor") -> "Tensor":
        return elementwise_mul(self, other)

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{label})"

    @classmethod
    def zeros(cls, shape: Sequence[int], dtype=DEFAULT_DTYPE) -> "Tensor":
        return cls(np.zeros(shape, dtype=dtype), dtype=dtype)


def _infer_dtype(data):
    if isinstance(data, np.ndarray) and data.dtype in (np.float32, np.float64):
        return data.dtype
    return DEFAULT_DTYPE


def _record(out: np.ndarray, op_kind: str, inputs: Sequence[Tensor], backward: BackwardFn,
            saved: Optional[Dict[str, Any]] = None) -> Tensor:
    """Wrap an op result and attach it to the tape when any input needs a gradient."""
    result = Tensor(out, dtype=out.dtype)
    if not np.all(np.isfinite(out)):
        raise NumericFailureError(f"non-finite value produced by {op_kind}", node=op_kind)
    if grad_enabled() and any(t.requires_grad for t in inputs):
        result.requires_grad = True
        result.node = TapeNode(op_kind=op_kind, inputs=tuple(inputs), backward=backward,
                               saved=saved or {})
    return result


def _topological_order(root: Tensor) -> List[Tensor]:
    """Post-order over the graph reachable from root, each tensor exactly once."""
    order: List[Tensor] = []
    visited = set()
    stack: List[Tuple[Tensor, bool]] = [(root, False)]
    while stack:
        tensor, expanded = stack.pop()
        if expanded:
            order.append(tensor)
            continue
        if id(tensor) in visited:
            continue
        visited.add(id(tensor))
        stack.append((tensor, True))
        if tensor.node is not None:
            for parent in reversed(tensor.node.inputs):
                if parent.requires_grad and id(parent) not in visited:
                    stack.append((parent, False))
    return order


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into .grad of every leaf that requires a gradient."""
    if loss.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not np.isfinite(loss.data).all():
        raise NumericFailureError("loss is not finite", node=loss.node.label if loss.node else "loss")
    if not loss.requires_grad:
        return

    grads: Dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for tensor in reversed(_topological_order(loss)):
        upstream = grads.pop(id(tensor), None)
        if upstream is None:
            continue
        node = tensor.node
        if not np.isfinite(upstream).all():
            label = node.label if node is not None else (tensor.name or "leaf")
            logger.error("non-finite gradient reaching %s", label)
            raise NumericFailureError(f"non-finite gradient at {label}", node=label)

        if node is None:
            tensor.grad = upstream if tensor.grad is None else tensor.grad + upstream
            continue

        for parent, grad in zip(node.inputs, node.backward(upstream)):
            if grad is None or not parent.requires_grad:
                continue
            if grad.shape != parent.shape:
                raise ShapeError(
                    f"{node.label} produced gradient {grad.shape} for input {parent.shape}"
                )
            key = id(parent)
            grads[key] = grad if key not in grads else grads[key] + grad


class ParamStore:
    """Ordered registry of named trainable tensors and their gradients."""

    def __init__(self, dtype=DEFAULT_DTYPE):
        self.dtype = dtype
        self._entries: "OrderedDict[str, Tensor]" = OrderedDict()

    def add(self, name: str, value: np.ndarray) -> Tensor:
        """Register a new parameter; names are unique."""
        if name in self._entries:
            raise KeyError(f"parameter '{name}' already registered")
        param = Tensor(np.array(value, dtype=self.dtype), requires_grad=True, name=name,
                       dtype=self.dtype)
        self._entries[name] = param
        return param

    def __getitem__(self, name: str) -> Tensor:
        return self._entries[name]

    def __contains__(self, name: str) -> bool:
        return name in self._entries

    def __iter__(self) -> Iterator[str]:
        return iter(self._entries)

    def __len__(self) -> int:
        return len(self._entries)

    def items(self) -> Iterator[Tuple[str, Tensor]]:
        return iter(self._entries.items())

    def names(self) -> List[str]:
        return list(self._entries)

    def num_elements(self) -> int:
        """Total number of trainable scalars."""
        return sum(p.size for p in self._entries.values())

    def zero_grad(self) -> None:
        for param in self._entries.values():
            param.grad = np.zeros_like(param.data)

    def gradients(self) -> Dict[str, np.ndarray]:
        return {name: p.grad for name, p in self._entries.items()}

    def state(self) -> "OrderedDict[str, np.ndarray]":
        """Copy of all parameter values, in registration order."""
        return OrderedDict((name, p.data.copy()) for name, p in self._entries.items())

    def load_state(self, state: Dict[str, np.ndarray]) -> None:
        """Overwrite parameter values in place from a name -> array mapping."""
        for name, param in self._entries.items():
            if name not in state:
                raise KeyError(f"missing parameter '{name}'")
            value = np.asarray(state[name])
            if value.shape != param.shape:
                raise ShapeError(f"parameter '{name}' has shape {param.shape}, got {value.shape}")
            param.data = np.array(value, dtype=self.dtype)

    def astype(self, dtype) -> "ParamStore":
        """Return a copy of the store with every parameter cast to dtype."""
        clone = ParamStore(dtype=dtype)
        for name, param in self._entries.items():
            clone.add(name, param.data.astype(dtype))
        return clone


def forward_backward(loss: Tensor, params: Optional[ParamStore] = None) -> Optional[ParamStore]:
    """Zero the store's gradients, back-propagate loss, and return the store."""
    if params is not None:
        params.zero_grad()
    backward(loss)
    return params


def _check_same_shape(op: str, a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


def elementwise_add(a: Tensor, b: Tensor) -> Tensor:
    """out = a + b; the upstream gradient flows unchanged to both inputs."""
    _check_same_shape("add", a, b)
    return _record(a.data + b.data, "add", (a, b), lambda g: (g, g))


def elementwise_mul(a: Tensor, b: Tensor) -> Tensor:
    """out = a * b elementwise."""
    _check_same_shape("mul", a, b)
    a_data, b_data = a.data, b.data
    return _record(a_data * b_data, "mul", (a, b), lambda g: (g * b_data, g * a_data))


def relu(x: Tensor) -> Tensor:
    """max(x, 0); the subgradient at 0 is 0."""
    mask = x.data > 0
    out = np.where(mask, x.data, 0).astype(x.dtype)
    return _record(out, "relu", (x,), lambda g: (np.where(mask, g, 0).astype(g.dtype),),
                   {"mask": mask})


def sum_all(x: Tensor) -> Tensor:
    """Scalar sum of every element."""
    shape, dtype = x.shape, x.dtype
    total = np.asarray(x.data.sum(dtype=dtype), dtype=dtype)
    return _record(total, "sum", (x,), lambda g: (np.full(shape, g, dtype=dtype),))
