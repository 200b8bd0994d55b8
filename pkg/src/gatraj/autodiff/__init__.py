"""Minimal dense-tensor reverse-mode autodiff engine (float64, numpy-backed)."""

from gatraj.autodiff.functional import (
    concat,
    conv1d,
    dropout,
    gather_rows,
    layer_norm,
    linear,
    lstm_cell,
    lstm_cell_projected,
    scatter_add_rows,
    segment_softmax,
    softmax,
    stack,
)
from gatraj.autodiff.gradcheck import GradCheckError, grad_check
from gatraj.autodiff.tensor import ShapeError, Tensor, as_tensor, is_grad_enabled, matmul, no_grad

__all__ = [
    "GradCheckError",
    "ShapeError",
    "Tensor",
    "as_tensor",
    "concat",
    "conv1d",
    "dropout",
    "gather_rows",
    "grad_check",
    "is_grad_enabled",
    "layer_norm",
    "linear",
    "lstm_cell",
    "lstm_cell_projected",
    "matmul",
    "no_grad",
    "scatter_add_rows",
    "segment_softmax",
    "softmax",
    "stack",
]
