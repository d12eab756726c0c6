"""
LoAd Platform - Networks and Optimizer

This module defines the networks shared by every stage of a run:
    - TrunkConfig / LayerSpec: the convolutional stack and its shape arithmetic
    - Trunk: the parameterized stack (conv + ReLU, max pooling)
    - TrunkClassifier: trunk -> GAP -> K-way head, the proxy pretraining model
    - DomainDiscriminator: trunk -> GAP -> single sigmoid unit
    - OptimizerState / FrozenMask / sgd_step / SGD: momentum SGD with
      coupled weight decay and optional Nesterov lookahead

The trunk is pretrained once as a source object classifier and then frozen;
the discriminator and the LoAd head train on top of its per-image features.

Created:    2026
License:    MIT - See LICENSE file
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .engine import (
    Tensor,
    conv2d,
    conv_output_extent,
    global_avg_pool,
    linear,
    max_pool2d,
    relu,
    sigmoid,
    sigmoid_bce,
    softmax_cross_entropy,
)
from .exceptions import ConfigError, ShapeError
from .serialization import checkpoint_digest

logger = logging.getLogger(__name__)

DOMAIN_LABELS = (1, 2)

# Subtracted from [0, 1] pixels before the first convolution
PIXEL_MEAN = 0.5


# ============================================================================
# TRUNK CONFIGURATION
# ============================================================================

@dataclass(frozen=True)
class LayerSpec:
    """One stage of the trunk: ``conv`` (followed by ReLU) or max ``pool``."""

    kind: str
    kernel: int
    stride: int = 1
    pad: int = 0
    channels: int = 0

    @classmethod
    def conv(cls, channels, kernel, stride=1, pad=0):
        return cls("conv", kernel, stride, pad, channels)

    @classmethod
    def pool(cls, window, stride):
        return cls("pool", window, stride)

    def output_extent(self, extent):
        if self.kind == "conv":
            return conv_output_extent(extent, self.kernel, self.stride, self.pad)
        return (extent - self.kernel) // self.stride + 1

    def required_input(self, extent):
        """Smallest input extent that still produces ``extent`` outputs."""
        reach = (extent - 1) * self.stride + self.kernel
        return max(reach - 2 * self.pad, 1) if self.kind == "conv" else reach


@dataclass(frozen=True)
class TrunkConfig:
    in_channels: int = 3
    side: int = 64
    layers: tuple = ()

    def __post_init__(self):
        if not any(layer.kind == "conv" for layer in self.layers):
            raise ConfigError("trunk needs at least one convolution")
        for layer in self.layers:
            if layer.kind not in ("conv", "pool"):
                raise ConfigError(f"unknown trunk layer kind {layer.kind!r}")
            if layer.kernel < 1 or layer.stride < 1 or layer.pad < 0:
                raise ConfigError(f"invalid trunk layer {layer}")
            if layer.kind == "conv" and layer.channels < 1:
                raise ConfigError(f"convolution needs positive channels: {layer}")

    @property
    def map_count(self):
        """N: channels of the last convolution."""
        return [layer for layer in self.layers if layer.kind == "conv"][-1].channels

    def minimum_side(self):
        extent = 1
        for layer in reversed(self.layers):
            extent = layer.required_input(extent)
        return extent

    def map_side(self):
        """u = v: spatial side of the trunk output."""
        extent = self.side
        for layer in self.layers:
            if layer.kind == "pool" and layer.kernel > extent:
                extent = 0
                break
            if layer.kind == "conv" and extent + 2 * layer.pad < layer.kernel:
                extent = 0
                break
            extent = layer.output_extent(extent)
        if extent < 1:
            raise ShapeError(
                f"input side {self.side} is too small for this trunk; "
                f"minimum side is {self.minimum_side()}"
            )
        return extent

    def output_shape(self):
        """(N, u, v) of the trunk output for one image."""
        side = self.map_side()
        return self.map_count, side, side

    def with_side(self, side):
        return TrunkConfig(self.in_channels, side, self.layers)


# 64 -> 30 -> 15 -> 13 -> 13, N = 32
DESK_TRUNK = TrunkConfig(
    in_channels=3,
    side=64,
    layers=(
        LayerSpec.conv(16, 5, stride=2),
        LayerSpec.pool(2, 2),
        LayerSpec.conv(32, 3),
        LayerSpec.conv(32, 3, pad=1),
    ),
)

# AlexNet up to conv5: 227 -> 55 -> 27 -> 27 -> 13 -> 13 -> 13 -> 13, N = 256
ALEXNET_TRUNK = TrunkConfig(
    in_channels=3,
    side=227,
    layers=(
        LayerSpec.conv(96, 11, stride=4),
        LayerSpec.pool(3, 2),
        LayerSpec.conv(256, 5, pad=2),
        LayerSpec.pool(3, 2),
        LayerSpec.conv(384, 3, pad=1),
        LayerSpec.conv(384, 3, pad=1),
        LayerSpec.conv(256, 3, pad=1),
    ),
)

TRUNK_PRESETS = {
    "desk": DESK_TRUNK,
    "alexnet": ALEXNET_TRUNK,
}


# ============================================================================
# PARAMETERS
# ============================================================================

def he_uniform(rng, shape, fan_in, dtype=np.float32):
    """Centered uniform draw with bound sqrt(6 / fan_in)."""
    bound = math.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


class ParameterSet:
    """Named parameter tensors with checkpoint-friendly accessors."""

    def __init__(self):
        self.params = {}

    def add(self, name, array):
        self.params[name] = Tensor(array, requires_grad=True)
        return self.params[name]

    def value(self, name, track=True):
        """The parameter itself, or a graph-free view of it."""
        param = self.params[name]
        return param if track else Tensor(param.data)

    def named_parameters(self, prefix=""):
        return {name: p for name, p in self.params.items() if name.startswith(prefix)}

    def state_dict(self):
        return {name: p.data.copy() for name, p in self.params.items()}

    def load_state_dict(self, tensors, strict=True):
        missing = [name for name in self.params if name not in tensors]
        if strict and missing:
            raise ShapeError(f"checkpoint is missing tensors: {', '.join(missing)}")
        for name, param in self.params.items():
            if name not in tensors:
                continue
            array = np.asarray(tensors[name])
            if array.shape != param.shape:
                raise ShapeError(
                    f"tensor {name}: checkpoint shape {array.shape} != model shape {param.shape}"
                )
            param.data = array.astype(param.dtype, copy=True)
            param.grad = None

    def zero_grad(self):
        for param in self.params.values():
            param.grad = None

    def digest(self):
        return checkpoint_digest(self.state_dict())


# ============================================================================
# TRUNK
# ============================================================================

class Trunk(ParameterSet):
    def __init__(self, config, rng, dtype=np.float32):
        super().__init__()
        config.output_shape()
        self.config = config
        channels = config.in_channels
        index = 0
        for layer in config.layers:
            if layer.kind != "conv":
                continue
            index += 1
            fan_in = channels * layer.kernel * layer.kernel
            shape = (layer.channels, channels, layer.kernel, layer.kernel)
            self.add(f"trunk.conv{index}.weight", he_uniform(rng, shape, fan_in, dtype))
            self.add(f"trunk.conv{index}.bias", np.zeros(layer.channels, dtype=dtype))
            channels = layer.channels

    def forward(self, x, track=True):
        """B×3×side×side images in [0, 1] -> B×N×u×v."""
        x = x if isinstance(x, Tensor) else Tensor(x)
        expected = (self.config.in_channels, self.config.side, self.config.side)
        if x.ndim != 4 or x.shape[1:] != expected:
            raise ShapeError(f"trunk expects B×{'×'.join(map(str, expected))}, got {x.shape}")
        x = x - PIXEL_MEAN
        index = 0
        for layer in self.config.layers:
            if layer.kind == "pool":
                x = max_pool2d(x, layer.kernel, layer.stride)
                continue
            index += 1
            kernel = self.value(f"trunk.conv{index}.weight", track)
            bias = self.value(f"trunk.conv{index}.bias", track)
            x = relu(conv2d(x, kernel, bias, stride=layer.stride, pad=layer.pad))
        return x

    __call__ = forward

    def clone(self):
        """Independent copy with the same configuration and weights."""
        twin = Trunk.__new__(Trunk)
        ParameterSet.__init__(twin)
        twin.config = self.config
        for name, param in self.params.items():
            twin.add(name, param.data.copy())
        return twin


def build_trunk(config, rng):
    return Trunk(config, rng)


def extract_features(trunk, images):
    """Frozen trunk features, one image per forward pass; returns M×N×u×v float32."""
    maps = [trunk.forward(np.asarray(image, dtype=np.float32)[None], track=False).data[0]
            for image in images]
    if not maps:
        return np.zeros((0,) + trunk.config.output_shape(), dtype=np.float32)
    return np.stack(maps).astype(np.float32, copy=False)


# ============================================================================
# HEADS
# ============================================================================

class TrunkClassifier(ParameterSet):
    """Trunk -> global average pool -> K logits, used for proxy pretraining."""

    def __init__(self, trunk, categories, rng):
        super().__init__()
        if categories < 2:
            raise ConfigError(f"object classifier needs K >= 2, got {categories}")
        self.trunk = trunk
        self.categories = categories
        width = trunk.config.map_count
        self.params.update(trunk.params)
        self.add("pretrain.head.weight", he_uniform(rng, (categories, width), width))
        self.add("pretrain.head.bias", np.zeros(categories, dtype=np.float32))

    def forward(self, x):
        pooled = global_avg_pool(self.trunk.forward(x))
        return linear(pooled, self.params["pretrain.head.weight"], self.params["pretrain.head.bias"])


class DomainDiscriminator(ParameterSet):
    """Trunk -> global average pool -> one logit; y1 = sigmoid(logit) is P(domain 1)."""

    def __init__(self, trunk, rng):
        super().__init__()
        self.trunk = trunk
        width = trunk.config.map_count
        self.params.update(trunk.params)
        self.add("domain.head.weight", he_uniform(rng, (1, width), width))
        self.add("domain.head.bias", np.zeros(1, dtype=np.float32))

    def head_parameters(self):
        return self.named_parameters("domain.")

    def features(self, image):
        """Frozen trunk output F for a 3×side×side image (or a batch)."""
        x = np.asarray(image, dtype=np.float32)
        if x.ndim == 3:
            x = x[None]
        return self.trunk.forward(x, track=False)

    def logit_from_features(self, features, track=True):
        features = features if isinstance(features, Tensor) else Tensor(features)
        return linear(
            global_avg_pool(features),
            self.value("domain.head.weight", track),
            self.value("domain.head.bias", track),
        )

    def score(self, features, c, mode="probability"):
        """
        Scalar score y^c summed over the batch.

        probability: y1 = sigmoid(z), y2 = 1 - y1
        logit:       y1 = z, y2 = -z
        """
        if c not in DOMAIN_LABELS:
            raise ShapeError(f"domain label must be 1 or 2, got {c!r}")
        z = self.logit_from_features(features, track=False)
        if mode == "probability":
            y = sigmoid(z)
            return (y if c == 1 else 1.0 - y).sum()
        if mode == "logit":
            return (z if c == 1 else -z).sum()
        raise ConfigError(f"unknown score mode {mode!r}")

    def predict_domain(self, features):
        """Domain label (1 or 2) per row of a feature batch."""
        z = self.logit_from_features(features, track=False).data[:, 0]
        return np.where(z >= 0, 1, 2)

    def forward(self, x):
        return self.logit_from_features(self.trunk.forward(x))


def build_discriminator(trunk, rng):
    return DomainDiscriminator(trunk, rng)


# ============================================================================
# OPTIMIZER
# ============================================================================

@dataclass
class OptimizerState:
    lr: float = 5e-4
    weight_decay: float = 5e-4
    momentum: float = 0.9
    nesterov: bool = True
    velocity: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.lr <= 0:
            raise ConfigError(f"learning rate must be positive, got {self.lr}")
        if self.weight_decay < 0 or not 0 <= self.momentum < 1:
            raise ConfigError(
                f"need weight_decay >= 0 and momentum in [0, 1), got {self.weight_decay}, {self.momentum}"
            )


@dataclass(frozen=True)
class FrozenMask:
    names: frozenset = frozenset()

    def __contains__(self, name):
        return name in self.names

    @classmethod
    def matching(cls, params, prefix):
        return cls(frozenset(name for name in params if name.startswith(prefix)))


def sgd_step(params, grads, state, mask=FrozenMask()):
    """
    One momentum SGD update, in place on ``params``.

    g = grad + wd*p; v = mu*v + g; p -= lr*(g + mu*v) with Nesterov, else p -= lr*v.
    """
    for name, param in params.items():
        if name in mask:
            continue
        grad = grads.get(name)
        if grad is None:
            continue
        if grad.shape != param.shape:
            raise ShapeError(f"gradient for {name} has shape {grad.shape}, parameter {param.shape}")
        g = grad + state.weight_decay * param.data
        velocity = state.velocity.get(name)
        if velocity is None:
            velocity = np.zeros_like(param.data)
        velocity = state.momentum * velocity + g
        state.velocity[name] = velocity
        update = g + state.momentum * velocity if state.nesterov else velocity
        param.data = (param.data - state.lr * update).astype(param.dtype, copy=False)
    return params


class SGD:
    """Binds parameters, optimizer state and a frozen mask to ``step()``."""

    def __init__(self, params, state=None, mask=FrozenMask()):
        self.params = dict(params)
        self.state = state or OptimizerState()
        self.mask = mask

    def zero_grad(self):
        for param in self.params.values():
            param.grad = None

    def step(self):
        grads = {name: p.grad for name, p in self.params.items() if p.grad is not None}
        sgd_step(self.params, grads, self.state, self.mask)


# ============================================================================
# TRAINING LOOPS
# ============================================================================

@dataclass(frozen=True)
class TrainingConfig:
    epochs: int = 30
    batch_size: int = 64
    lr: float = 5e-4
    weight_decay: float = 5e-4
    momentum: float = 0.9
    nesterov: bool = True

    def optimizer_state(self):
        return OptimizerState(
            lr=self.lr,
            weight_decay=self.weight_decay,
            momentum=self.momentum,
            nesterov=self.nesterov,
        )


def stack_batch(items, indices):
    return np.stack([np.asarray(items[i], dtype=np.float32) for i in indices])


def minibatches(order, batch_size):
    for start in range(0, len(order), batch_size):
        yield order[start:start + batch_size]


def pretrain_trunk(trunk, images, labels, categories, settings, rng):
    """
    Proxy pretraining: fit trunk + GAP + K-way head on labeled source images.

    Returns the per-epoch mean loss; the trunk parameters are updated in place.
    """
    labels = np.asarray(labels, dtype=np.int64)
    if len(labels) != len(images):
        raise ShapeError(f"{len(images)} images but {len(labels)} labels")
    model = TrunkClassifier(trunk, categories, rng)
    optimizer = SGD(model.params, settings.optimizer_state())
    curve = []
    for epoch in range(settings.epochs):
        order = rng.permutation(len(labels))
        total = 0.0
        for batch in minibatches(order, settings.batch_size):
            optimizer.zero_grad()
            loss = softmax_cross_entropy(model.forward(stack_batch(images, batch)), labels[batch])
            loss.backward()
            optimizer.step()
            total += loss.item() * len(batch)
        curve.append(total / len(labels))
        logger.debug("pretrain epoch %d/%d loss %.4f", epoch + 1, settings.epochs, curve[-1])
    optimizer.zero_grad()
    logger.info("Trunk pretrained on %d images, final loss %.4f", len(labels), curve[-1] if curve else float("nan"))
    return curve


def balanced_order(domains, rng):
    """Permuted indices with the smaller domain resampled up to the larger one."""
    domains = np.asarray(domains)
    first = np.flatnonzero(domains == 1)
    second = np.flatnonzero(domains == 2)
    if len(first) == 0 or len(second) == 0:
        raise ShapeError("discriminator training needs images of both domains")
    if len(first) < len(second):
        first = np.concatenate([first, rng.choice(first, len(second) - len(first))])
    elif len(second) < len(first):
        second = np.concatenate([second, rng.choice(second, len(first) - len(second))])
    return rng.permutation(np.concatenate([first, second]))


def train_discriminator(disc, inputs, domains, settings, rng, train_trunk=False, batch_hook=None):
    """
    Fit the domain discriminator from domain labels alone.

    ``inputs`` are frozen trunk features (M×N×u×v) unless ``train_trunk`` is
    set, in which case they are images and the trunk is updated too.
    ``batch_hook(epoch, indices)`` sees the indices of every batch.
    """
    domains = np.asarray(domains, dtype=np.int64)
    if len(domains) != len(inputs):
        raise ShapeError(f"{len(inputs)} inputs but {len(domains)} domain labels")
    if not set(np.unique(domains)) <= set(DOMAIN_LABELS):
        raise ShapeError("domain labels must be 1 or 2")

    params = disc.head_parameters()
    if train_trunk:
        params.update(disc.trunk.params)
    optimizer = SGD(params, settings.optimizer_state())
    targets = (domains == 1).astype(np.float32)

    curve = []
    for epoch in range(settings.epochs):
        order = balanced_order(domains, rng)
        total = 0.0
        for batch in minibatches(order, settings.batch_size):
            if batch_hook is not None:
                batch_hook(epoch, batch)
            optimizer.zero_grad()
            x = stack_batch(inputs, batch)
            features = disc.trunk.forward(x) if train_trunk else Tensor(x)
            loss = sigmoid_bce(disc.logit_from_features(features), targets[batch])
            loss.backward()
            optimizer.step()
            total += loss.item() * len(batch)
        curve.append(total / len(order))
        logger.debug("discriminator epoch %d/%d loss %.4f", epoch + 1, settings.epochs, curve[-1])
    optimizer.zero_grad()
    return curve


def domain_accuracy(disc, features, domains):
    """Percent of feature rows whose predicted domain matches ``domains``."""
    domains = np.asarray(domains)
    if len(domains) == 0:
        return 0.0
    predicted = np.concatenate([
        disc.predict_domain(features[start:start + 256])
        for start in range(0, len(domains), 256)
    ])
    return float((predicted == domains).mean() * 100.0)
