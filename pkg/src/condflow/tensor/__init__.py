from .checkpoint import dumps, load_checkpoint, loads, save_checkpoint
from .core import (
    ComputationTape,
    Tensor,
    add,
    as_tensor,
    backward,
    concat,
    cos,
    elementwise,
    exp,
    finite_checks,
    gelu,
    get_default_dtype,
    getitem,
    is_grad_enabled,
    layer_norm,
    matmul,
    mean,
    mul,
    no_grad,
    precision,
    reshape,
    scale,
    sin,
    softmax,
    square,
    sub,
    sum_,
    tanh,
    transpose,
)
from .gradcheck import grad_check

__all__ = [
    "ComputationTape", "Tensor", "add", "as_tensor", "backward", "concat", "cos",
    "dumps", "elementwise", "exp", "finite_checks", "gelu", "get_default_dtype",
    "getitem", "grad_check", "is_grad_enabled", "layer_norm", "load_checkpoint",
    "loads", "matmul", "mean", "mul", "no_grad", "precision", "reshape",
    "save_checkpoint", "scale", "sin", "softmax", "square", "sub", "sum_", "tanh",
    "transpose",
]
