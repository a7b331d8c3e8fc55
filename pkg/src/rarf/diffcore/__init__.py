"""Minimal reverse-mode autodiff engine, parameters, optimizer and checkpoints."""

from .checkpoint import Checkpoint, CheckpointError
from .params import Adam, ParamStore, adam_step, glorot
from .rng import SplitMix64, derive_seed
from .tensor import (
    ShapeError,
    Tensor,
    add,
    affine,
    as_tensor,
    broadcast_to,
    concat,
    div,
    exp,
    getitem,
    layer_norm,
    log,
    matmul,
    mean,
    mul,
    power,
    relu,
    reshape,
    sigmoid,
    softmax,
    softplus,
    stack,
    sub,
    swapaxes,
    take,
    tanh,
    transpose,
    tsum,
)

__all__ = [
    "Adam", "Checkpoint", "CheckpointError", "ParamStore", "ShapeError", "SplitMix64", "Tensor",
    "adam_step", "add", "affine", "as_tensor", "broadcast_to", "concat", "derive_seed", "div", "exp", "getitem",
    "glorot", "layer_norm", "log", "matmul", "mean", "mul", "power", "relu", "reshape", "sigmoid", "softmax",
    "softplus", "stack", "sub", "swapaxes", "take", "tanh", "transpose", "tsum",
]
