"""Named parameter collections, the Adam optimizer and checkpoint files."""

from __future__ import annotations

from collections import OrderedDict
from pathlib import Path
from typing import Iterator, Mapping, Optional

import numpy as np

from .tensor import ShapeError, Tape, Tensor

CHECKPOINT_VERSION = 1


class ParamSet:
    """Ordered mapping of name -> trainable tensor, plus Adam moment state."""

    def __init__(self, tensors: Optional[Mapping[str, np.ndarray]] = None):
        self._tensors: "OrderedDict[str, Tensor]" = OrderedDict()
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.step_count = 0
        for name, value in (tensors or {}).items():
            self.add(name, value)

    def add(self, name: str, value: np.ndarray) -> Tensor:
        if name in self._tensors:
            raise KeyError(f"duplicate parameter name {name!r}")
        t = Tensor(np.array(value, dtype=np.float64), requires_grad=True, name=name)
        self._tensors[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._tensors[name]

    def __iter__(self) -> Iterator[str]:
        return iter(self._tensors)

    def __len__(self) -> int:
        return len(self._tensors)

    def items(self):
        return self._tensors.items()

    def values(self) -> dict[str, np.ndarray]:
        return {name: t.data for name, t in self._tensors.items()}

    def copy(self) -> "ParamSet":
        """Deep copy of values and optimizer state."""
        out = ParamSet({name: t.data.copy() for name, t in self._tensors.items()})
        out.m = {k: v.copy() for k, v in self.m.items()}
        out.v = {k: v.copy() for k, v in self.v.items()}
        out.step_count = self.step_count
        return out

    def reset_optimizer(self) -> None:
        self.m, self.v, self.step_count = {}, {}, 0

    def equal(self, other: "ParamSet") -> bool:
        """Bit-identical values under identical names."""
        return list(self) == list(other) and all(
            np.array_equal(self[n].data, other[n].data) for n in self
        )

    def save(self, path: str | Path) -> None:
        """Write ``.npz``: one little-endian float64 array per parameter plus a version tag."""
        arrays = {f"param/{n}": t.data.astype("<f8") for n, t in self._tensors.items()}
        arrays["format_version"] = np.array([CHECKPOINT_VERSION], dtype="<i8")
        with open(path, "wb") as fh:
            np.savez(fh, **arrays)

    @classmethod
    def load(cls, path: str | Path) -> "ParamSet":
        with np.load(path, allow_pickle=False) as data:
            version = int(data["format_version"][0]) if "format_version" in data.files else None
            if version != CHECKPOINT_VERSION:
                raise ValueError(f"{path}: unsupported checkpoint version {version}")
            return cls({k[len("param/") :]: data[k] for k in data.files if k.startswith("param/")})


def backward(tape: Tape, loss: Tensor, params: Optional[ParamSet] = None) -> dict[str, np.ndarray]:
    """Differentiate ``loss``; returns gradients for every tensor in ``params``.

    Parameters the loss does not reach get zero gradients.
    """
    grads = tape.backward(loss)
    if params is None:
        return {}
    return {
        name: grads[id(t)] if id(t) in grads else np.zeros_like(t.data)
        for name, t in params.items()
    }


def adam_step(
    params: ParamSet,
    grads: Mapping[str, np.ndarray],
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> ParamSet:
    """One bias-corrected Adam update, applied in place."""
    for name, g in grads.items():
        if g.shape != params[name].shape:
            raise ShapeError(f"adam_step: gradient for {name!r} has shape {g.shape}, parameter {params[name].shape}")
    params.step_count += 1
    t = params.step_count
    for name, g in grads.items():
        m = params.m.get(name)
        v = params.v.get(name)
        m = (1 - beta1) * g if m is None else beta1 * m + (1 - beta1) * g
        v = (1 - beta2) * g * g if v is None else beta2 * v + (1 - beta2) * g * g
        params.m[name], params.v[name] = m, v
        m_hat = m / (1 - beta1**t)
        v_hat = v / (1 - beta2**t)
        params[name].data -= lr * m_hat / (np.sqrt(v_hat) + eps)
    return params
