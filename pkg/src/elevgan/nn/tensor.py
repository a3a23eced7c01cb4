"""Tensors and the recording tape behind reverse-mode differentiation."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np


class ShapeError(ValueError):
    pass


class Tensor:
    """A float64 array that may take part in a recorded computation."""

    __slots__ = ("data", "requires_grad", "grad", "name")

    def __init__(self, data, requires_grad: bool = False, name: Optional[str] = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def item(self) -> float:
        return float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self) -> str:
        label = f" {self.name!r}" if self.name else ""
        return f"Tensor{label}(shape={self.shape}, requires_grad={self.requires_grad})"


BackwardFn = Callable[[Sequence[np.ndarray]], Sequence[Optional[np.ndarray]]]


@dataclass
class Node:
    op: str
    inputs: tuple[Tensor, ...]
    outputs: tuple[Tensor, ...]
    backward: BackwardFn


class Tape:
    """Records differentiable ops executed inside ``with Tape() as tape:``.

    Nodes are stored in execution order, which is already a topological
    order of the graph.
    """

    _active: list["Tape"] = []

    def __init__(self):
        self.nodes: list[Node] = []

    def __enter__(self) -> "Tape":
        Tape._active.append(self)
        return self

    def __exit__(self, *exc) -> None:
        Tape._active.pop()

    @classmethod
    def current(cls) -> Optional["Tape"]:
        return cls._active[-1] if cls._active else None

    def backward(self, loss: Tensor) -> dict[int, np.ndarray]:
        """Propagate d(loss)/d(.) back through the tape.

        Returns gradients keyed by ``id(tensor)`` and also stores them on
        every leaf tensor that requires grad.
        """
        if loss.data.size != 1:
            raise ShapeError(f"backward: loss must be scalar, got shape {loss.shape}")
        grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
        produced = set()
        for node in reversed(self.nodes):
            outs = [grads.get(id(t)) for t in node.outputs]
            for t in node.outputs:
                produced.add(id(t))
            if all(g is None for g in outs):
                continue
            outs = [np.zeros_like(t.data) if g is None else g for g, t in zip(outs, node.outputs)]
            for tensor, g in zip(node.inputs, node.backward(outs)):
                if g is None or not tensor.requires_grad:
                    continue
                key = id(tensor)
                grads[key] = grads[key] + g if key in grads else g
        for node in self.nodes:
            for tensor in node.inputs:
                if tensor.requires_grad and id(tensor) not in produced and id(tensor) in grads:
                    tensor.grad = grads[id(tensor)]
        return grads


def record(op: str, inputs: Sequence[Tensor], outputs: Sequence[Tensor], backward: BackwardFn) -> None:
    """Attach ``outputs`` to the active tape if any input needs a gradient."""
    tape = Tape.current()
    if tape is None or not any(t.requires_grad for t in inputs):
        return
    for out in outputs:
        out.requires_grad = True
    tape.nodes.append(Node(op, tuple(inputs), tuple(outputs), backward))


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)
