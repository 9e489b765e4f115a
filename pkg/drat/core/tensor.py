"""
Dense float64 tensors with reverse-mode gradients.

A tensor produced by an op keeps its parents and a backward closure that maps
the output gradient to one gradient per parent. ``backward`` walks the graph in
reverse topological order and accumulates into leaves with ``requires_grad``.
"""
from __future__ import annotations

from contextlib import contextmanager
from contextvars import ContextVar
from typing import Callable, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from drat.core.errors import ContractViolation, NumericError

BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]

_grad_enabled: ContextVar[bool] = ContextVar("drat_grad_enabled", default=True)


def is_grad_enabled() -> bool:
    return _grad_enabled.get()


@contextmanager
def no_grad() -> Iterator[None]:
    """Evaluate without recording the graph."""
    token = _grad_enabled.set(False)
    try:
        yield
    finally:
        _grad_enabled.reset(token)


def check_finite(array: np.ndarray, where: str) -> None:
    if not np.all(np.isfinite(array)):
        raise NumericError(f"Non-finite values produced by {where}")


class Tensor:
    def __init__(self, data, requires_grad: bool = False, name: Optional[str] = None):
        array = np.array(data, dtype=np.float64)
        if any(extent <= 0 for extent in array.shape):
            raise ContractViolation(f"Tensor extents must be positive, got {array.shape}")
        check_finite(array, name or "tensor construction")
        self.data: np.ndarray = array
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self.name = name
        self._parents: Tuple[Tensor, ...] = ()
        self._backward: Optional[BackwardFn] = None
        self._op = "leaf"

    @classmethod
    def from_op(
        cls,
        data: np.ndarray,
        parents: Sequence["Tensor"],
        backward: BackwardFn,
        op: str,
    ) -> "Tensor":
        array = np.asarray(data, dtype=np.float64)
        check_finite(array, op)
        out = cls.__new__(cls)
        out.data = array
        out.grad = None
        out.name = None
        out._op = op
        track = is_grad_enabled() and any(p.requires_grad for p in parents)
        out.requires_grad = track
        out._parents = tuple(parents) if track else ()
        out._backward = backward if track else None
        return out

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractViolation(f"item() needs a single element, shape is {self.shape}")
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def zero_grad(self) -> None:
        self.grad = None

    def _topological_order(self) -> List["Tensor"]:
        order: List[Tensor] = []
        visited = set()
        stack: List[Tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in visited:
                    stack.append((parent, False))
        return order

    def backward(self, grad: Optional[np.ndarray] = None) -> None:
        if not self.requires_grad:
            raise ContractViolation("backward() called on a tensor that does not require grad")
        if grad is None:
            if self.data.size != 1:
                raise ContractViolation("backward() without a seed needs a single-element tensor")
            seed = np.ones_like(self.data)
        else:
            seed = np.asarray(grad, dtype=np.float64)
            if seed.shape != self.shape:
                raise ContractViolation(f"Seed shape {seed.shape} != tensor shape {self.shape}")

        pending: Dict[int, np.ndarray] = {id(self): seed}
        for node in reversed(self._topological_order()):
            g = pending.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node.grad = g.copy() if node.grad is None else node.grad + g
                continue
            for parent, parent_grad in zip(node._parents, node._backward(g)):
                if parent_grad is None or not parent.requires_grad:
                    continue
                key = id(parent)
                pending[key] = parent_grad if key not in pending else pending[key] + parent_grad

    def __add__(self, other: "Tensor") -> "Tensor":
        from drat.core import ops

        return ops.add(self, other)

    def __sub__(self, other: "Tensor") -> "Tensor":
        from drat.core import ops

        return ops.sub(self, other)

    def __mul__(self, other: "Tensor") -> "Tensor":
        from drat.core import ops

        return ops.mul(self, other)

    def __matmul__(self, other: "Tensor") -> "Tensor":
        from drat.core import ops

        return ops.matmul(self, other)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        label = f", name={self.name}" if self.name else ""
        return f"Tensor(shape={self.shape}, op={self._op}{flag}{label})"
