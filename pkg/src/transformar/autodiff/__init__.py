"""Reverse-mode automatic differentiation over numpy arrays."""

from .gradcheck import GradCheckResult, check_gradients, numeric_gradient
from .tensor import (
    Tensor,
    add,
    as_tensor,
    backward,
    computation_record,
    concat,
    exp,
    gelu,
    is_grad_enabled,
    l2_normalize,
    layer_norm,
    linear,
    log,
    log_softmax,
    matmul,
    mean,
    mul,
    neg,
    no_grad,
    permute,
    prepend_token,
    record,
    reshape,
    softmax,
    sqrt,
    square,
    stop_gradient,
    sub,
    take,
    tanh,
    tensor_abs,
    tensor_sum,
    transpose,
)

__all__ = [name for name in dir() if not name.startswith("_")]
