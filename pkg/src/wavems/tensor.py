"""Dense tensors with reverse-mode differentiation.

Values live in numpy arrays (row-major, C order). Operations in
:mod:`wavems.ops` record their inputs and a backward closure on the output
tensor; calling :func:`backward` on a scalar result fills ``grad`` on every
reachable tensor that requires gradients. Gradients accumulate additively,
both across multiple uses of a tensor and across repeated backward calls;
reset them explicitly with :func:`zero_grads`.

A computation graph uses one precision throughout (float32 or float64;
mixed graphs are rejected by the ops) and is confined to a single logical
thread from forward through backward. Tensors themselves are plain values
and safe to hand between threads.
"""

from __future__ import annotations

from typing import Callable, Iterable, Optional

import numpy as np

from .errors import ShapeError

#: Supported precisions. Training defaults to single; gradient checks need double.
DTYPES = {"single": np.float32, "double": np.float64}

_FLOAT_DTYPES = (np.dtype(np.float32), np.dtype(np.float64))

_grad_enabled = True


def _as_float_array(data, dtype=None) -> np.ndarray:
    arr = np.asarray(data, dtype=dtype)
    if arr.dtype not in _FLOAT_DTYPES:
        arr = arr.astype(np.float64)
    if arr.ndim and not arr.flags["C_CONTIGUOUS"]:
        arr = np.ascontiguousarray(arr)  # which would promote 0-d to 1-d
    return arr


class Tensor:
    """N-dimensional value array with an optional gradient slot."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        self.data: np.ndarray = _as_float_array(data, dtype)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Optional[Callable[[np.ndarray], None]] = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype.name}, requires_grad={self.requires_grad})"


class no_grad:
    """Context manager that disables graph recording (inference mode)."""

    def __enter__(self):
        global _grad_enabled
        self._prev = _grad_enabled
        _grad_enabled = False
        return self

    def __exit__(self, *exc):
        global _grad_enabled
        _grad_enabled = self._prev
        return False


def grad_enabled() -> bool:
    return _grad_enabled


def make_node(out_data: np.ndarray, parents: Iterable[Tensor],
              backward_fn: Callable[[np.ndarray], None]) -> Tensor:
    """Wrap an op result, recording the graph edge when gradients are live."""
    out = Tensor(out_data)
    parents = tuple(parents)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward_fn
    return out


_active_sweep: Optional[dict[int, np.ndarray]] = None


def accumulate_grad(t: Tensor, g: np.ndarray) -> None:
    """Add a gradient contribution to ``t``. Never mutates existing grads in place.

    During a backward sweep contributions collect in sweep-local adjoints,
    so repeated backward calls each add exactly one d(loss)/d(t) to ``grad``.
    """
    if not t.requires_grad:
        return
    if _active_sweep is not None:
        key = id(t)
        cur = _active_sweep.get(key)
        _active_sweep[key] = g if cur is None else cur + g
    else:
        t.grad = g if t.grad is None else t.grad + g


def backward(loss: Tensor) -> None:
    """Reverse-mode sweep from a scalar loss.

    Populates ``grad`` on every requires_grad tensor reachable through the
    recorded graph. Repeated calls accumulate on top of existing grads.
    """
    global _active_sweep
    if loss.shape != ():
        raise ShapeError(f"backward requires a scalar loss, got shape {loss.shape}")

    # Iterative post-order topological sort; graphs can be deep when a batch
    # loss is chained from many per-sample terms.
    topo: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in visited:
                stack.append((parent, False))

    sweep: dict[int, np.ndarray] = {}
    _active_sweep = sweep
    try:
        accumulate_grad(loss, np.ones((), dtype=loss.data.dtype))
        for node in reversed(topo):
            if node._backward is not None:
                adjoint = sweep.get(id(node))
                if adjoint is not None:
                    node._backward(adjoint)
    finally:
        _active_sweep = None

    for node in topo:
        adjoint = sweep.get(id(node))
        if adjoint is not None:
            node.grad = adjoint if node.grad is None else node.grad + adjoint


class Parameter:
    """Trainable tensor plus its momentum buffer.

    ``decay_exempt`` marks parameters skipped by weight decay (biases).
    """

    __slots__ = ("value", "velocity", "decay_exempt")

    def __init__(self, data, decay_exempt: bool = False):
        self.value = data if isinstance(data, Tensor) else Tensor(data)
        self.value.requires_grad = True
        self.velocity: np.ndarray = np.zeros_like(self.value.data)
        self.decay_exempt = bool(decay_exempt)

    def __repr__(self) -> str:
        return f"Parameter(shape={self.value.shape}, decay_exempt={self.decay_exempt})"


def zero_grads(params: Iterable[Parameter]) -> None:
    """Clear accumulated gradients between optimizer steps."""
    for p in params:
        p.value.grad = None
