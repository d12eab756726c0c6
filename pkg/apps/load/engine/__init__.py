"""
LoAd Platform - Tensor Engine Package

Minimal dense-tensor engine with reverse-mode differentiation, organised as:
    - tensor: Tensor, ComputeGraphNode and the backward pass
    - ops: the differentiable operations used by the networks
    - gradcheck: finite-difference verification of gradients

Everything is re-exported here so callers import from ``apps.load.engine``.

Created:    2026
License:    MIT - See LICENSE file
"""

from .tensor import ComputeGraphNode, Tensor, as_tensor, check_finite, make_result

from .ops import (
    adaptive_max_pool2d,
    adaptive_pool_plan,
    bilinear_upsample,
    concat_channels,
    conv2d,
    conv_output_extent,
    dropout,
    elementwise_mul,
    global_avg_pool,
    linear,
    max_pool2d,
    relu,
    sigmoid,
    sigmoid_bce,
    softmax,
    softmax_cross_entropy,
    split_channels,
)

from .gradcheck import GradCheckReport, grad_check, numeric_gradient, relative_error

__all__ = [
    # Tensor
    "ComputeGraphNode",
    "Tensor",
    "as_tensor",
    "check_finite",
    "make_result",
    # Ops
    "adaptive_max_pool2d",
    "adaptive_pool_plan",
    "bilinear_upsample",
    "concat_channels",
    "conv2d",
    "conv_output_extent",
    "dropout",
    "elementwise_mul",
    "global_avg_pool",
    "linear",
    "max_pool2d",
    "relu",
    "sigmoid",
    "sigmoid_bce",
    "softmax",
    "softmax_cross_entropy",
    "split_channels",
    # Gradient checks
    "GradCheckReport",
    "grad_check",
    "numeric_gradient",
    "relative_error",
]
