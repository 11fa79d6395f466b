"""
Dense float32 tensors with reverse-mode automatic differentiation.
"""

from atoms.tensor.core import (
    DTYPE,
    GradTape,
    TapeEntry,
    Tensor,
    add,
    as_tensor,
    backward,
    concat,
    divide,
    exp,
    gaussian_sample,
    hadamard,
    layer_norm,
    log,
    matmul,
    no_grad,
    power,
    reduce_mean,
    reduce_sum,
    relu,
    reshape,
    scale,
    sigmoid,
    softmax_rows,
    subtract,
    take,
    transpose,
)
from atoms.tensor.module import Module

__all__ = [
    "DTYPE",
    "GradTape",
    "Module",
    "TapeEntry",
    "Tensor",
    "add",
    "as_tensor",
    "backward",
    "concat",
    "divide",
    "exp",
    "gaussian_sample",
    "hadamard",
    "layer_norm",
    "log",
    "matmul",
    "no_grad",
    "power",
    "reduce_mean",
    "reduce_sum",
    "relu",
    "reshape",
    "scale",
    "sigmoid",
    "softmax_rows",
    "subtract",
    "take",
    "transpose",
]
