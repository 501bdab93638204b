"""Dense-array math with reverse-mode differentiation and Adam.

The engine is a dynamic tape over float64 numpy arrays: ops execute
eagerly, record their backward rule on the active Tape, and
Tape.backward replays them in reverse execution order.
"""
from morphkit.tensorcore.engine import (
    Tape,
    Tensor,
    add,
    apply,
    concat,
    exp,
    gather_row,
    gather_rows,
    gru_cell,
    log,
    log_softmax,
    matmul,
    mean,
    mul,
    neg,
    no_grad,
    pick,
    scale,
    sigmoid,
    slice_axis,
    softmax,
    split,
    stack_rows,
    sub,
    tensor,
    tensor_sum,
    transpose,
    weighted_sum,
)
from morphkit.tensorcore.optim import AdamState, adam_step
from morphkit.tensorcore.gradcheck import grad_check
from morphkit.tensorcore.checkpoint import load_arrays, save_arrays

__all__ = [
    "AdamState", "Tape", "Tensor", "adam_step", "add", "apply", "concat",
    "exp", "gather_row", "gather_rows", "grad_check", "gru_cell",
    "load_arrays", "log", "log_softmax", "matmul", "mean", "mul", "neg",
    "no_grad", "pick", "save_arrays", "scale", "sigmoid", "slice_axis",
    "softmax", "split", "stack_rows", "sub", "tensor", "tensor_sum",
    "transpose", "weighted_sum",
]
