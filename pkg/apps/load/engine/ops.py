"""
LoAd Platform - Differentiable Operations

The operations the trunk, the domain discriminator and the LoAd head are
built from. Each forward returns a new Tensor; when any input requires a
gradient the result carries the backward rule for its inputs.

    - conv2d, relu, max_pool2d, adaptive_pool_plan / adaptive_max_pool2d
    - global_avg_pool, linear, elementwise_mul, concat_channels
    - sigmoid, softmax_cross_entropy, sigmoid_bce, dropout
    - bilinear_upsample (forward only), split_channels (forward only)

Convolution lowers windows to a column matrix (im2col) and runs a single
matmul; its backward scatters column gradients back per kernel offset.

Created:    2026
License:    MIT - See LICENSE file
"""

import math

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..exceptions import ShapeError
from .tensor import Tensor, as_tensor, make_result


def _expect_rank(tensor, rank, what):
    if tensor.ndim != rank:
        raise ShapeError(f"{what} must have rank {rank}, got shape {tensor.shape}")


def _pair(value):
    if isinstance(value, (tuple, list)):
        return int(value[0]), int(value[1])
    return int(value), int(value)


# ---------------------------------------------------------------------------
# Convolution
# ---------------------------------------------------------------------------

def conv_output_extent(extent, kernel, stride, pad):
    return (extent + 2 * pad - kernel) // stride + 1


def _im2col(padded, kh, kw, stride, out_h, out_w):
    windows = sliding_window_view(padded, (kh, kw), axis=(2, 3))
    windows = windows[:, :, ::stride, ::stride][:, :, :out_h, :out_w]
    batch, channels = padded.shape[:2]
    return windows.transpose(0, 2, 3, 1, 4, 5).reshape(
        batch * out_h * out_w, channels * kh * kw
    )


def conv2d(x, kernel, bias, stride=1, pad=0):
    """2-D cross-correlation of a B×Cin×H×W batch with Cout×Cin×kh×kw kernels."""
    _expect_rank(x, 4, "conv2d input")
    _expect_rank(kernel, 4, "conv2d kernel")
    batch, channels, height, width = x.shape
    out_channels, kernel_channels, kh, kw = kernel.shape
    if kernel_channels != channels:
        raise ShapeError(
            f"conv2d: input has {channels} channels (Cin) but kernel expects "
            f"{kernel_channels}"
        )
    if bias.shape != (out_channels,):
        raise ShapeError(f"conv2d: bias shape {bias.shape} != ({out_channels},)")
    if stride < 1 or pad < 0:
        raise ShapeError(f"conv2d: stride must be >= 1 and pad >= 0 (got {stride}, {pad})")
    if height + 2 * pad < kh or width + 2 * pad < kw:
        raise ShapeError(
            f"conv2d: padded input {height + 2 * pad}x{width + 2 * pad} is smaller "
            f"than kernel {kh}x{kw}"
        )

    out_h = conv_output_extent(height, kh, stride, pad)
    out_w = conv_output_extent(width, kw, stride, pad)
    padded = x.data
    if pad:
        padded = np.pad(padded, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    cols = _im2col(padded, kh, kw, stride, out_h, out_w)
    kmat = kernel.data.reshape(out_channels, -1)
    out = cols @ kmat.T + bias.data
    out = np.ascontiguousarray(out.reshape(batch, out_h, out_w, out_channels).transpose(0, 3, 1, 2))

    def backward(g):
        gmat = g.transpose(0, 2, 3, 1).reshape(-1, out_channels)
        grad_kernel = (gmat.T @ cols).reshape(kernel.shape) if kernel.requires_grad else None
        grad_bias = gmat.sum(axis=0) if bias.requires_grad else None
        grad_x = None
        if x.requires_grad:
            gcols = (gmat @ kmat).reshape(batch, out_h, out_w, channels, kh, kw)
            grad_padded = np.zeros_like(padded)
            row_end, col_end = stride * out_h, stride * out_w
            for i in range(kh):
                for j in range(kw):
                    grad_padded[:, :, i:i + row_end:stride, j:j + col_end:stride] += (
                        gcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
                    )
            grad_x = grad_padded[:, :, pad:pad + height, pad:pad + width] if pad else grad_padded
        return grad_x, grad_kernel, grad_bias

    return make_result(out, "conv2d", (x, kernel, bias), backward)


# ---------------------------------------------------------------------------
# Activations
# ---------------------------------------------------------------------------

def relu(x):
    x = as_tensor(x)
    mask = x.data > 0
    return make_result(np.where(mask, x.data, 0).astype(x.dtype), "relu", (x,),
                       lambda g: (g * mask,))


def _stable_sigmoid(z):
    return np.exp(-np.logaddexp(0, -z))


def sigmoid(x):
    out = _stable_sigmoid(x.data).astype(x.dtype)
    return make_result(out, "sigmoid", (x,), lambda g: (g * out * (1 - out),))


# ---------------------------------------------------------------------------
# Pooling
# ---------------------------------------------------------------------------

def max_pool2d(x, window, stride):
    """
    Max over ``window`` patches taken every ``stride`` positions.

    The gradient goes to the first row-major argmax of each window.
    """
    _expect_rank(x, 4, "max_pool2d input")
    (wh, ww), (sh, sw) = _pair(window), _pair(stride)
    batch, channels, height, width = x.shape
    if wh < 1 or ww < 1 or sh < 1 or sw < 1:
        raise ShapeError("max_pool2d: window and stride must be positive")
    if wh > height or ww > width:
        raise ShapeError(
            f"max_pool2d: window {wh}x{ww} exceeds spatial extent {height}x{width}"
        )
    out_h = (height - wh) // sh + 1
    out_w = (width - ww) // sw + 1
    windows = sliding_window_view(x.data, (wh, ww), axis=(2, 3))
    flat = windows[:, :, ::sh, ::sw][:, :, :out_h, :out_w].reshape(
        batch, channels, out_h, out_w, wh * ww
    )
    argmax = flat.argmax(axis=-1)
    out = np.take_along_axis(flat, argmax[..., None], axis=-1)[..., 0]

    def backward(g):
        rows = (np.arange(out_h) * sh)[None, None, :, None] + argmax // ww
        cols = (np.arange(out_w) * sw)[None, None, None, :] + argmax % ww
        b_idx = np.arange(batch)[:, None, None, None]
        c_idx = np.arange(channels)[None, :, None, None]
        grad = np.zeros_like(x.data)
        np.add.at(grad, (b_idx, c_idx, rows, cols), g)
        return (grad,)

    return make_result(np.ascontiguousarray(out), "max_pool2d", (x,), backward)


def adaptive_pool_plan(in_extent, out_extent):
    """
    Window and stride mapping ``in_extent`` positions onto ``out_extent``.

    window = ceil(in/out), stride = floor(in/out); when those leave trailing
    positions uncovered the window grows to in - stride*(out-1), so the last
    window always ends on the last input position.
    """
    in_extent, out_extent = int(in_extent), int(out_extent)
    if in_extent < 1 or out_extent < 1:
        raise ShapeError("adaptive_pool_plan: extents must be positive")
    if out_extent > in_extent:
        raise ShapeError(
            f"adaptive_pool_plan: output extent {out_extent} exceeds input extent {in_extent}"
        )
    stride = in_extent // out_extent
    window = max(math.ceil(in_extent / out_extent), in_extent - stride * (out_extent - 1))
    return window, stride


def adaptive_max_pool2d(x, out_side):
    """Max pooling onto a fixed out_side×out_side grid."""
    _expect_rank(x, 4, "adaptive_max_pool2d input")
    wh, sh = adaptive_pool_plan(x.shape[2], out_side)
    ww, sw = adaptive_pool_plan(x.shape[3], out_side)
    return max_pool2d(x, (wh, ww), (sh, sw))


def global_avg_pool(x):
    """B×C×H×W -> B×C, mean over spatial positions."""
    _expect_rank(x, 4, "global_avg_pool input")
    shape = x.shape
    count = shape[2] * shape[3]

    def backward(g):
        return (np.broadcast_to(g[:, :, None, None] / count, shape).astype(g.dtype, copy=True),)

    return make_result(x.data.mean(axis=(2, 3)), "global_avg_pool", (x,), backward)


# ---------------------------------------------------------------------------
# Affine, fusion and concatenation
# ---------------------------------------------------------------------------

def linear(x, weight, bias):
    """B×D input, O×D weight, O bias -> B×O."""
    _expect_rank(x, 2, "linear input")
    _expect_rank(weight, 2, "linear weight")
    if x.shape[1] != weight.shape[1]:
        raise ShapeError(
            f"linear: input width {x.shape[1]} != weight input width {weight.shape[1]}"
        )
    if bias.shape != (weight.shape[0],):
        raise ShapeError(f"linear: bias shape {bias.shape} != ({weight.shape[0]},)")

    def backward(g):
        return (
            g @ weight.data if x.requires_grad else None,
            g.T @ x.data if weight.requires_grad else None,
            g.sum(axis=0) if bias.requires_grad else None,
        )

    return make_result(x.data @ weight.data.T + bias.data, "linear", (x, weight, bias), backward)


def elementwise_mul(a, b):
    """Hadamard product of two same-shape tensors."""
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise ShapeError(f"elementwise_mul: shape mismatch {a.shape} vs {b.shape}")
    return make_result(a.data * b.data, "elementwise_mul", (a, b),
                       lambda g: (g * b.data, g * a.data))


def concat_channels(a, b):
    """Stack two B×C×H×W tensors along the channel axis."""
    _expect_rank(a, 4, "concat_channels first input")
    _expect_rank(b, 4, "concat_channels second input")
    if (a.shape[0], a.shape[2], a.shape[3]) != (b.shape[0], b.shape[2], b.shape[3]):
        raise ShapeError(
            f"concat_channels: batch/spatial mismatch {a.shape} vs {b.shape}"
        )
    split = a.shape[1]
    return make_result(
        np.concatenate([a.data, b.data], axis=1),
        "concat_channels",
        (a, b),
        lambda g: (g[:, :split], g[:, split:]),
    )


def split_channels(x, first):
    """Inverse of concat_channels: first ``first`` channels and the rest."""
    _expect_rank(x, 4, "split_channels input")
    if not 0 < first < x.shape[1]:
        raise ShapeError(f"split_channels: cannot split {x.shape[1]} channels at {first}")
    return Tensor(x.data[:, :first].copy()), Tensor(x.data[:, first:].copy())


# ---------------------------------------------------------------------------
# Losses
# ---------------------------------------------------------------------------

def softmax(logits):
    z = logits.data if isinstance(logits, Tensor) else np.asarray(logits)
    shifted = z - z.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=1, keepdims=True)


def softmax_cross_entropy(logits, labels):
    """Mean negative log-likelihood of integer ``labels`` under softmax(logits)."""
    _expect_rank(logits, 2, "softmax_cross_entropy logits")
    batch, classes = logits.shape
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    if labels.shape != (batch,):
        raise ShapeError(f"softmax_cross_entropy: {labels.size} labels for batch of {batch}")
    if labels.min() < 0 or labels.max() >= classes:
        raise ShapeError(
            f"softmax_cross_entropy: labels must lie in [0, {classes}), "
            f"got range [{labels.min()}, {labels.max()}]"
        )
    z = logits.data
    peak = z.max(axis=1, keepdims=True)
    log_norm = peak + np.log(np.exp(z - peak).sum(axis=1, keepdims=True))
    rows = np.arange(batch)
    loss = np.asarray((log_norm[:, 0] - z[rows, labels]).mean(), dtype=z.dtype)

    def backward(g):
        grad = np.exp(z - log_norm)
        grad[rows, labels] -= 1
        return (grad * (g / batch),)

    return make_result(loss, "softmax_cross_entropy", (logits,), backward)


def sigmoid_bce(logit, labels):
    """Mean binary cross-entropy of a B×1 logit in log-sum-exp form."""
    _expect_rank(logit, 2, "sigmoid_bce logit")
    batch = logit.shape[0]
    if logit.shape[1] != 1:
        raise ShapeError(f"sigmoid_bce: expected B×1 logits, got {logit.shape}")
    labels = np.asarray(labels, dtype=logit.dtype).reshape(-1)
    if labels.shape != (batch,):
        raise ShapeError(f"sigmoid_bce: {labels.size} labels for batch of {batch}")
    if not np.isin(labels, (0, 1)).all():
        raise ShapeError(f"sigmoid_bce: labels must be 0 or 1, got {np.unique(labels).tolist()}")
    z = logit.data[:, 0]
    loss = np.maximum(z, 0) - z * labels + np.log1p(np.exp(-np.abs(z)))
    value = np.asarray(loss.mean(), dtype=logit.dtype)

    def backward(g):
        return (((_stable_sigmoid(z) - labels) * (g / batch)).reshape(batch, 1).astype(z.dtype),)

    return make_result(value, "sigmoid_bce", (logit,), backward)


# ---------------------------------------------------------------------------
# Regularisation
# ---------------------------------------------------------------------------

def dropout(x, rate, training, rng):
    """Inverted dropout: survivors scaled by 1/(1-rate) so eval is identity."""
    if not 0 <= rate < 1:
        raise ShapeError(f"dropout: rate must lie in [0, 1), got {rate}")
    if not training or rate == 0:
        return x
    mask = (rng.random(x.shape) >= rate).astype(x.dtype) / x.dtype.type(1 - rate)
    return make_result(x.data * mask, "dropout", (x,), lambda g: (g * mask,))


# ---------------------------------------------------------------------------
# Resampling (forward only)
# ---------------------------------------------------------------------------

def _corner_aligned(n_in, n_out):
    if n_in == 1 or n_out == 1:
        position = np.zeros(n_out)
    else:
        position = np.arange(n_out) * ((n_in - 1) / (n_out - 1))
    low = np.minimum(np.floor(position).astype(np.int64), n_in - 1)
    high = np.minimum(low + 1, n_in - 1)
    return low, high, position - low


def bilinear_upsample(grid, out_h, out_w):
    """
    Bilinear resampling of the last two axes onto out_h×out_w with a
    corner-aligned grid. Leading axes (channels) are carried along.
    """
    data = grid.data if isinstance(grid, Tensor) else np.asarray(grid)
    if data.ndim < 2:
        raise ShapeError(f"bilinear_upsample needs at least 2 axes, got {data.shape}")
    if out_h < 1 or out_w < 1:
        raise ShapeError("bilinear_upsample: output extents must be positive")
    dtype = data.dtype if data.dtype.kind == "f" else np.float32
    data = data.astype(dtype, copy=False)

    low, high, frac = _corner_aligned(data.shape[-2], out_h)
    frac = frac.astype(dtype)[:, None]
    top, bottom = data[..., low, :], data[..., high, :]
    rows = top + frac * (bottom - top)

    low, high, frac = _corner_aligned(data.shape[-1], out_w)
    frac = frac.astype(dtype)
    left, right = rows[..., low], rows[..., high]
    return Tensor(left + frac * (right - left))
