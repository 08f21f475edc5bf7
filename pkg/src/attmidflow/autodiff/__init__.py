"""Reverse-mode automatic differentiation over numpy arrays."""

from . import ops
from .gradcheck import check_gradients, numerical_grad, relative_error
from .ops import (
    add,
    avg_pool2d,
    bilinear_resize,
    concat_channels,
    conv2d,
    conv_output_size,
    cross_entropy,
    deconv2d,
    deconv_output_size,
    flow_norm,
    leaky_relu,
    linear,
    mean,
    mul,
    reshape,
    sigmoid,
    sub,
)
from .tensor import (
    Tensor,
    as_tensor,
    get_default_dtype,
    graph_ops,
    is_grad_enabled,
    no_grad,
    precision,
    set_default_dtype,
    topological_order,
)

__all__ = [
    "Tensor", "ops", "add", "sub", "mul", "mean", "reshape", "sigmoid", "leaky_relu",
    "conv2d", "deconv2d", "avg_pool2d", "bilinear_resize", "concat_channels", "linear",
    "flow_norm", "cross_entropy", "conv_output_size", "deconv_output_size",
    "as_tensor", "get_default_dtype", "set_default_dtype", "precision", "no_grad",
    "is_grad_enabled", "graph_ops", "topological_order",
    "check_gradients", "numerical_grad", "relative_error",
]
