"""
LoAd Platform - Domainness Maps

Gradient-weighted attribution of the domain discriminator's score to the
last convolutional maps F (N×u×v) of one image:

    - gradcam_weights:      w_n = mean over (i, j) of d y^c / d F^n_ij
    - heatmap:              H = ReLU(sum_n w_n F^n)
    - per_map_activations:  W_n = ReLU(w_n F^n), kept per map
    - domain_generic_bundle: the bundle for the label opposite the image's
      own domain; the same-label bundle is the domain-specific one

Bundles are computed with one forward and one backward pass per (image,
label) and kept in a DomainnessCache keyed by the discriminator's
checkpoint hash. render_map writes a map as PGM plus a PPM overlay.

Created:    2026
License:    MIT - See LICENSE file
"""

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .engine import Tensor, bilinear_upsample
from .exceptions import DataError, ShapeError
from .serialization import (
    dumps_checkpoint,
    loads_checkpoint,
    to_uint8,
    write_atomic,
    write_pgm,
    write_ppm,
)

logger = logging.getLogger(__name__)

SCORE_MODES = ("probability", "logit")


# ============================================================================
# BUNDLES
# ============================================================================

@dataclass
class DomainnessBundle:
    weights: np.ndarray
    heatmap: np.ndarray
    activations: np.ndarray
    domain: int

    def to_tensors(self):
        return {
            "weights": self.weights,
            "heatmap": self.heatmap,
            "activations": self.activations,
            "domain": np.array([self.domain], dtype=np.float32),
        }

    @classmethod
    def from_tensors(cls, tensors):
        return cls(
            weights=tensors["weights"],
            heatmap=tensors["heatmap"],
            activations=tensors["activations"],
            domain=int(tensors["domain"][0]),
        )


def _check_label(c):
    if c not in (1, 2):
        raise ShapeError(f"domain label must be 1 or 2, got {c!r}")


def _feature_tensor(disc, image, features):
    if features is None:
        return disc.features(image).data
    features = np.asarray(features)
    return features[None] if features.ndim == 3 else features


def gradcam_weights(disc, image, c, mode="probability", features=None):
    """
    Per-map weights for label ``c``: the gradient of y^c with respect to F,
    averaged over the u×v positions (Z = u·v).

    ``features`` short-circuits the trunk when F is already known.
    """
    _check_label(c)
    maps = _feature_tensor(disc, image, features)
    if maps.shape[0] != 1:
        raise ShapeError(f"gradcam_weights works on one image, got batch of {maps.shape[0]}")
    leaf = Tensor(maps.copy(), requires_grad=True)
    disc.score(leaf, c, mode).backward()
    grad = leaf.grad[0]
    return grad.mean(axis=(1, 2)).astype(maps.dtype)


def weighted_heatmap(weights, maps):
    """ReLU of the weighted sum over maps (N×u×v -> u×v)."""
    return np.maximum(np.tensordot(weights, maps, axes=1), 0)


def weighted_activations(weights, maps):
    """ReLU of each weighted map (N×u×v -> N×u×v), not summed."""
    return np.maximum(weights[:, None, None] * maps, 0)


def compute_bundle(disc, image, c, mode="probability", features=None):
    maps = _feature_tensor(disc, image, features)
    weights = gradcam_weights(disc, image, c, mode, features=maps)
    return DomainnessBundle(
        weights=weights,
        heatmap=weighted_heatmap(weights, maps[0]),
        activations=weighted_activations(weights, maps[0]),
        domain=c,
    )


def heatmap(disc, image, c, mode="probability", features=None):
    return compute_bundle(disc, image, c, mode, features).heatmap


def per_map_activations(disc, image, c, mode="probability", features=None):
    return compute_bundle(disc, image, c, mode, features).activations


def generic_label(own_domain):
    _check_label(own_domain)
    return 3 - own_domain


def domain_generic_bundle(disc, image, own_domain, mode="probability", features=None):
    """Bundle attributed to the other domain: the image's domain-generic regions."""
    return compute_bundle(disc, image, generic_label(own_domain), mode, features)


def domain_specific_bundle(disc, image, own_domain, mode="probability", features=None):
    _check_label(own_domain)
    return compute_bundle(disc, image, own_domain, mode, features)


def predicted_generic_label(disc, features):
    """Generic label chosen from the discriminator's own domain prediction."""
    maps = np.asarray(features)
    maps = maps[None] if maps.ndim == 3 else maps
    return 3 - int(disc.predict_domain(maps)[0])


# ============================================================================
# CACHE
# ============================================================================

class DomainnessCache:
    """
    Bundles per (image id, label) for one discriminator checkpoint.

    With a ``root`` every bundle is also stored at
    root/<disc_hash>/<image_id>.d<label>, written temp-then-rename.
    """

    def __init__(self, disc_hash, root=None):
        self.disc_hash = disc_hash
        self.root = Path(root) / disc_hash if root else None
        self._memory = {}
        self.hits = 0
        self.misses = 0

    @property
    def provenance(self):
        return {"discriminator": self.disc_hash}

    def path(self, image_id, label):
        return self.root / f"{image_id}.d{label}" if self.root else None

    def get(self, image_id, label):
        key = (image_id, label)
        if key in self._memory:
            self.hits += 1
            return self._memory[key]
        path = self.path(image_id, label)
        if path is not None and path.exists():
            try:
                blob = path.read_bytes()
            except OSError as exc:
                raise DataError(f"{path}: cannot read bundle: {exc}") from exc
            bundle = DomainnessBundle.from_tensors(loads_checkpoint(blob, source=str(path)))
            self._memory[key] = bundle
            self.hits += 1
            return bundle
        self.misses += 1
        return None

    def put(self, image_id, bundle):
        self._memory[(image_id, bundle.domain)] = bundle
        path = self.path(image_id, bundle.domain)
        if path is not None:
            write_atomic(path, dumps_checkpoint(bundle.to_tensors()))

    def __contains__(self, key):
        image_id, label = key
        if key in self._memory:
            return True
        path = self.path(image_id, label)
        return path is not None and path.exists()

    def __len__(self):
        return len(self._memory)

    def missing(self, keys):
        """Image ids among (image id, label) ``keys`` with no stored bundle."""
        return [image_id for image_id, label in keys if (image_id, label) not in self]

    def lookup(self, keys):
        """Bundles for ``keys``; raises DataError listing every missing id."""
        absent = self.missing(keys)
        if absent:
            shown = ", ".join(absent[:10]) + (" ..." if len(absent) > 10 else "")
            raise DataError(f"{len(absent)} images have no cached bundle: {shown}")
        return [self.get(image_id, label) for image_id, label in keys]


def fill_cache(cache, disc, items, features, labels, mode="probability"):
    """Compute and store the bundle of each (item, label) not cached yet."""
    computed = 0
    for item, maps, label in zip(items, features, labels):
        if (item.image_id, label) in cache:
            continue
        cache.put(item.image_id, compute_bundle(disc, None, label, mode, features=maps))
        computed += 1
    logger.debug("Computed %d bundles (%d requested)", computed, len(items))
    return computed


# ============================================================================
# MAP FILES
# ============================================================================

def normalized_map(H, height, width):
    """Max-normalise a nonnegative map and upsample it to height×width."""
    H = np.asarray(H, dtype=np.float64)
    if H.ndim != 2:
        raise ShapeError(f"map must be 2-D, got shape {H.shape}")
    if (H < 0).any():
        raise ShapeError("map must be nonnegative")
    peak = H.max()
    scaled = H / peak if peak > 0 else np.zeros_like(H)
    return np.clip(bilinear_upsample(scaled, height, width).data, 0.0, 1.0)


def render_map(H, pixels, out_path):
    """
    Write ``H`` as an 8-bit PGM at the image's size, and a 50% blend of the
    map over the H×W×3 uint8 ``pixels`` as PPM.

    A constant map renders white, so its overlay lifts the image halfway to
    white; a zero map renders black and halves the image.

    Returns (pgm_path, ppm_path): <out_path>.pgm and <out_path>.overlay.ppm.
    """
    pixels = np.asarray(pixels)
    if pixels.ndim != 3 or pixels.shape[2] != 3:
        raise ShapeError(f"overlay needs H×W×3 pixels, got {pixels.shape}")
    height, width = pixels.shape[:2]
    grid = normalized_map(H, height, width)

    out_path = Path(out_path)
    pgm_path = out_path.with_name(out_path.name + ".pgm")
    ppm_path = out_path.with_name(out_path.name + ".overlay.ppm")
    write_pgm(pgm_path, to_uint8(grid))
    blend = 0.5 * (pixels.astype(np.float64) / 255.0) + 0.5 * grid[..., None]
    write_ppm(ppm_path, to_uint8(blend))
    return pgm_path, ppm_path


def center_of_mass(H, height, width):
    """(x, y) image coordinates of the map's mass after corner-aligned upsampling."""
    grid = normalized_map(H, height, width)
    total = grid.sum()
    if total == 0:
        return None
    rows, cols = np.mgrid[0:height, 0:width]
    return float((grid * cols).sum() / total), float((grid * rows).sum() / total)
