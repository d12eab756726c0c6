"""
LoAd Platform - Local Adaptive Classifier

The object classifier that consumes domainness activations:

    C = trunk(image)                      frozen object feature maps
    M = C * W   (mul)  or  C * (W + 1)    fused with the generic activations
    x = [pool(C), pool(M)]                adaptive max pooling to p×p, concat
    logits = FC3(drop(relu(FC2(drop(relu(FC1(x)))))))

W enters the graph as a constant, so no gradient reaches the discriminator.
Fusion mode ``none`` drops the fused branch and is the plain baseline.

Created:    2026
License:    MIT - See LICENSE file
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from .engine import (
    Tensor,
    adaptive_max_pool2d,
    concat_channels,
    dropout,
    elementwise_mul,
    linear,
    relu,
    softmax,
    softmax_cross_entropy,
)
from .exceptions import ConfigError, DataError, ShapeError
from .nets import (
    DESK_TRUNK,
    SGD,
    FrozenMask,
    ParameterSet,
    extract_features,
    he_uniform,
    minibatches,
    stack_batch,
)

logger = logging.getLogger(__name__)

FUSION_MODES = ("mul", "mul-plus-one", "none")

INFERENCE_BATCH = 256


# ============================================================================
# CONFIGURATION
# ============================================================================

@dataclass(frozen=True)
class LoadConfig:
    trunk: object = DESK_TRUNK
    pool_side: int = 3
    fc_widths: tuple = (256, 256)
    categories: int = 15
    fusion: str = "mul"
    dropout: float = 0.6

    def validate(self):
        errors = []
        if self.categories < 2:
            errors.append(f"need K >= 2 categories, got {self.categories}")
        if self.fusion not in FUSION_MODES:
            errors.append(f"fusion must be one of {', '.join(FUSION_MODES)}, got {self.fusion!r}")
        if not 0 <= self.dropout < 1:
            errors.append(f"dropout must lie in [0, 1), got {self.dropout}")
        if len(self.fc_widths) != 2 or min(self.fc_widths) < 1:
            errors.append(f"fc_widths must be two positive widths, got {self.fc_widths}")
        side = self.trunk.map_side()
        if not 1 <= self.pool_side <= side:
            errors.append(f"pooled side {self.pool_side} must lie in [1, {side}] for this trunk")
        if errors:
            raise ConfigError("invalid LoAd config: " + "; ".join(errors))
        return self

    @property
    def fc_input_width(self):
        width = self.trunk.map_count * self.pool_side ** 2
        return width if self.fusion == "none" else 2 * width


@dataclass(frozen=True)
class PoolingPreset:
    name: str
    pool_side: int
    fc_width: int


def ablation_presets(fc_width):
    """6×6 with doubled FC width, then 4×4 and 3×3 at the configured width."""
    return (
        PoolingPreset("p6", 6, 2 * fc_width),
        PoolingPreset("p4", 4, fc_width),
        PoolingPreset("p3", 3, fc_width),
    )


# ============================================================================
# MODEL
# ============================================================================

class LoadClassifier(ParameterSet):
    def __init__(self, config, trunk, rng):
        super().__init__()
        config.validate()
        if trunk.config != config.trunk:
            raise ShapeError("classifier trunk does not match the configured trunk")
        self.config = config
        self.trunk = trunk
        self.params.update(trunk.params)
        widths = (config.fc_input_width, *config.fc_widths, config.categories)
        for index, (fan_in, fan_out) in enumerate(zip(widths[:-1], widths[1:]), start=1):
            self.add(f"load.fc{index}.weight", he_uniform(rng, (fan_out, fan_in), fan_in))
            self.add(f"load.fc{index}.bias", np.zeros(fan_out, dtype=np.float32))

    def head_parameters(self):
        return self.named_parameters("load.")

    def fuse(self, maps, activations):
        """Pooled original branch, concatenated with the pooled fused branch."""
        maps = maps if isinstance(maps, Tensor) else Tensor(maps)
        side = self.config.pool_side
        original = adaptive_max_pool2d(maps, side)
        if self.config.fusion == "none":
            return original.flatten()
        if activations is None:
            raise ShapeError(f"fusion mode {self.config.fusion} needs domainness activations")
        activations = np.asarray(activations, dtype=maps.dtype)
        if activations.shape != maps.shape:
            raise ShapeError(
                f"activations {activations.shape} do not match trunk output {maps.shape}"
            )
        if self.config.fusion == "mul-plus-one":
            activations = activations + 1
        fused = elementwise_mul(maps, Tensor(activations))
        return concat_channels(original, adaptive_max_pool2d(fused, side)).flatten()

    def _fc(self, index, x):
        return linear(x, self.params[f"load.fc{index}.weight"], self.params[f"load.fc{index}.bias"])

    def penultimate(self, x, training=False, rng=None):
        """Activations after the second FC layer and its ReLU (fc7)."""
        rate = self.config.dropout
        x = dropout(relu(self._fc(1, x)), rate, training, rng)
        return relu(self._fc(2, x))

    def head(self, x, training=False, rng=None):
        hidden = dropout(self.penultimate(x, training, rng), self.config.dropout, training, rng)
        return self._fc(3, hidden)

    def forward(self, maps, activations=None, training=False, rng=None):
        return self.head(self.fuse(maps, activations), training, rng)


def build_load(config, trunk, rng):
    return LoadClassifier(config, trunk, rng)


def load_forward(model, image, bundle=None, training=False, rng=None):
    """Logits (K) for one 3×side×side image with its generic bundle."""
    maps = model.trunk.forward(np.asarray(image, dtype=np.float32)[None], track=False)
    activations = None
    if bundle is not None:
        if bundle.activations.shape != maps.shape[1:]:
            raise ShapeError(
                f"bundle activations {bundle.activations.shape} do not match "
                f"trunk output {maps.shape[1:]}"
            )
        activations = bundle.activations[None]
    return model.forward(maps, activations, training, rng).data[0]


# ============================================================================
# TRAINING AND INFERENCE
# ============================================================================

@dataclass
class TrainResult:
    curve: list = field(default_factory=list)
    source_accuracy: float = 0.0


def bundle_activations(model, cache, items, labels):
    """Stacked activations of each item's bundle, or None for fusion ``none``."""
    if model.config.fusion == "none":
        return None
    keys = [(item.image_id, label) for item, label in zip(items, labels)]
    return np.stack([bundle.activations for bundle in cache.lookup(keys)])


def mean_loss(model, features, activations, labels):
    total = 0.0
    for start in range(0, len(labels), INFERENCE_BATCH):
        stop = start + INFERENCE_BATCH
        logits = model.forward(
            features[start:stop],
            None if activations is None else activations[start:stop],
        )
        total += softmax_cross_entropy(logits, labels[start:stop]).item() * len(logits.data)
    return total / len(labels)


def train_load(model, items, features, cache, generic_labels, settings, rng,
               train_trunk=False, images=None):
    """
    Fit the classifier on labeled source ``items``.

    ``features`` are the frozen trunk maps of the items; with ``train_trunk``
    the trunk is refitted from ``images`` instead. Every item must have a
    cached bundle for its generic label. curve[0] is the loss before the
    first update, then one mean training loss per epoch.
    """
    if len(items) == 0:
        raise DataError("no source images to train on")
    labels = np.array([item.category for item in items], dtype=np.int64)
    activations = bundle_activations(model, cache, items, generic_labels)
    if train_trunk:
        if images is None:
            raise ConfigError("training the trunk end-to-end needs the source images")
        features = extract_features(model.trunk, images)

    mask = FrozenMask() if train_trunk else FrozenMask.matching(model.params, "trunk.")
    params = model.params if train_trunk else model.head_parameters()
    optimizer = SGD(params, settings.optimizer_state(), mask)

    curve = [mean_loss(model, features, activations, labels)]
    for epoch in range(settings.epochs):
        order = rng.permutation(len(labels))
        total = 0.0
        for batch in minibatches(order, settings.batch_size):
            optimizer.zero_grad()
            if train_trunk:
                maps = model.trunk.forward(stack_batch(images, batch))
            else:
                maps = Tensor(features[batch])
            fused = None if activations is None else activations[batch]
            loss = softmax_cross_entropy(model.forward(maps, fused, training=True, rng=rng), labels[batch])
            loss.backward()
            optimizer.step()
            total += loss.item() * len(batch)
        curve.append(total / len(labels))
        logger.debug("load epoch %d/%d loss %.4f", epoch + 1, settings.epochs, curve[-1])
    optimizer.zero_grad()

    if train_trunk:
        features = extract_features(model.trunk, images)
    predicted, _ = predict(model, features, activations)
    result = TrainResult(curve=curve, source_accuracy=accuracy(predicted, labels))
    logger.info(
        "Trained %s classifier on %d images: loss %.4f -> %.4f, train accuracy %.2f%%",
        model.config.fusion, len(labels), curve[0], curve[-1], result.source_accuracy,
    )
    return result


def predict(model, features, activations=None):
    """
    Category labels and softmax scores per image, in evaluation mode.

    Ties go to the lowest category index.
    """
    labels, scores = [], []
    for start in range(0, len(features), INFERENCE_BATCH):
        stop = start + INFERENCE_BATCH
        logits = model.forward(
            features[start:stop],
            None if activations is None else activations[start:stop],
        )
        probabilities = softmax(logits)
        scores.append(probabilities)
        labels.append(np.argmax(probabilities, axis=1))
    if not scores:
        return np.zeros(0, dtype=np.int64), np.zeros((0, model.config.categories), dtype=np.float32)
    return np.concatenate(labels), np.concatenate(scores)


def penultimate_features(model, features, activations=None):
    """fc7 activations (eval mode) for every row of ``features``."""
    rows = []
    for start in range(0, len(features), INFERENCE_BATCH):
        stop = start + INFERENCE_BATCH
        fused = model.fuse(
            features[start:stop],
            None if activations is None else activations[start:stop],
        )
        rows.append(model.penultimate(fused).data)
    return np.concatenate(rows)


def accuracy(predicted, truth):
    """Percent of matching labels."""
    truth = np.asarray(truth)
    if len(truth) == 0:
        return 0.0
    return float((np.asarray(predicted) == truth).mean() * 100.0)
