"""Minimal float64 array engine with reverse-mode differentiation."""
from .checkpoint import MAGIC, CheckpointError, load_checkpoint, save_checkpoint
from .gradcheck import grad_check, grad_check_many
from .tensor import (
    Tape,
    Tensor,
    active_tape,
    add,
    as_tensor,
    backward,
    concat,
    dropout,
    exp,
    gather,
    index,
    layer_norm,
    log,
    masked_fill,
    matmul,
    max_,
    mul,
    relu,
    reshape,
    sigmoid,
    softmax,
    stack,
    sub,
    sum_,
    tanh,
    transpose,
)

__all__ = [
    "MAGIC", "CheckpointError", "Tape", "Tensor", "active_tape", "add", "as_tensor",
    "backward", "concat", "dropout", "exp", "gather", "grad_check", "grad_check_many",
    "index", "layer_norm", "load_checkpoint", "log", "masked_fill", "matmul", "max_",
    "mul", "relu", "reshape", "save_checkpoint", "sigmoid", "softmax", "stack", "sub",
    "sum_", "tanh", "transpose",
]
