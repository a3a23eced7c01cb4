"""Small float64 autodiff library: tape, ops, parameters, Adam, gradient checks."""

from .gradcheck import GradCheckResult, grad_check, numeric_gradient
from .params import ParamSet, adam_step, backward
from .tensor import Node, ShapeError, Tape, Tensor

__all__ = [
    "GradCheckResult",
    "Node",
    "ParamSet",
    "ShapeError",
    "Tape",
    "Tensor",
    "adam_step",
    "backward",
    "grad_check",
    "numeric_gradient",
]
