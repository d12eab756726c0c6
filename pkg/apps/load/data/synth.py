"""
LoAd Platform - Synthetic Two-Domain Dataset

Procedural stand-in for a robot-camera object dataset with a spatially
grounded domain shift:

    - every category has its own glyph (a polygon, star or ellipse in a
      category hue); every instance perturbs its category glyph
    - translation mode: domain 1 shows objects in the left half over a
      striped background, domain 2 in the right half over blotches with a
      darker, lower-contrast illumination
    - scale mode: objects span 15-25% of the side (far) in domain 1 and
      55-75% (close) in domain 2 over a shared background

Each image is a pure function of (seed, domain, category, instance, frame),
rasterised with Pillow.

Created:    2026
License:    MIT - See LICENSE file
"""

import colorsys
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from PIL import Image, ImageDraw

from ..exceptions import ConfigError

logger = logging.getLogger(__name__)

SYNTH_MODES = ("translation", "scale")

# Vertex counts cycled over categories; 0 draws an ellipse
_GLYPH_VERTICES = (0, 3, 4, 5, 6, 8)
_ELLIPSE_SEGMENTS = 24

# Seed-sequence namespaces so category, instance and frame draws never collide
_CATEGORY_STREAM = 1
_INSTANCE_STREAM = 2
_FRAME_STREAM = 3


# ============================================================================
# TYPES
# ============================================================================

@dataclass
class LabeledImage:
    """
    One image with its labels. ``pixels`` is side×side×3 uint8; ``image``
    gives the 3×side×side float32 view in [0, 1] the networks consume.
    """

    image_id: str
    pixels: np.ndarray
    category: int
    instance: str
    domain: int
    frame: int = 0
    box: tuple = None
    path: str = ""

    @property
    def image(self):
        return self.pixels.transpose(2, 0, 1).astype(np.float32) / np.float32(255.0)

    @property
    def side(self):
        return self.pixels.shape[0]


@dataclass
class Dataset:
    images: list
    categories: int
    side: int
    origin: str = "synth"
    category_names: list = field(default_factory=list)

    def __len__(self):
        return len(self.images)

    def domain(self, domain):
        return [item for item in self.images if item.domain == domain]

    def by_id(self):
        return {item.image_id: item for item in self.images}

    def counts(self):
        return {d: sum(1 for item in self.images if item.domain == d) for d in (1, 2)}


class ImageSequence:
    """Lazy float view over LabeledImages, indexable like an array of images."""

    def __init__(self, items):
        self.items = list(items)

    def __len__(self):
        return len(self.items)

    def __getitem__(self, index):
        return self.items[index].image

    def __iter__(self):
        return (item.image for item in self.items)


@dataclass(frozen=True)
class SynthConfig:
    mode: str = "translation"
    categories: int = 15
    instances: int = 10
    split: tuple = (6, 4)
    frames: int = 50
    side: int = 64
    seed: int = 0
    # translation-mode illumination per domain: pixel -> contrast*(p-0.5)+0.5+brightness
    brightness: tuple = (0.0, -0.12)
    contrast: tuple = (1.0, 0.8)
    # second domain drawn in the first domain's style, instances still disjoint
    identical_domains: bool = False

    def validate(self):
        errors = []
        if self.mode not in SYNTH_MODES:
            errors.append(f"mode must be one of {', '.join(SYNTH_MODES)}, got {self.mode!r}")
        for name in ("categories", "instances", "frames"):
            if getattr(self, name) <= 0:
                errors.append(f"{name} must be positive, got {getattr(self, name)}")
        if len(self.split) != 2 or min(self.split) <= 0:
            errors.append(f"split must be two positive counts, got {self.split}")
        elif sum(self.split) != self.instances:
            errors.append(
                f"split {self.split[0]}/{self.split[1]} does not sum to {self.instances} instances"
            )
        if self.side < 16:
            errors.append(f"side must be at least 16 pixels, got {self.side}")
        if errors:
            raise ConfigError("invalid synthetic dataset config: " + "; ".join(errors))
        return self

    def domain_instances(self, domain):
        """Instance indices owned by a domain: the first split[0], then the rest."""
        if domain == 1:
            return range(0, self.split[0])
        return range(self.split[0], self.instances)

    def total(self):
        return self.categories * self.instances * self.frames


@dataclass(frozen=True)
class Glyph:
    vertices: int
    color: tuple
    aspect: float
    rotation: float
    radial: tuple


@dataclass(frozen=True)
class DomainStyle:
    background: str
    placement: str
    scale: tuple
    brightness: float
    contrast: float


# ============================================================================
# GLYPHS
# ============================================================================

def _stream(cfg, *indices):
    return np.random.default_rng(np.random.SeedSequence([cfg.seed, *indices]))


def category_glyph(cfg, category):
    rng = _stream(cfg, _CATEGORY_STREAM, category)
    vertices = _GLYPH_VERTICES[category % len(_GLYPH_VERTICES)]
    count = vertices or _ELLIPSE_SEGMENTS
    star = vertices >= 5 and (category // len(_GLYPH_VERTICES)) % 2 == 1
    if star:
        count = 2 * vertices
        radial = tuple(1.0 if k % 2 == 0 else 0.5 for k in range(count))
    else:
        radial = (1.0,) * count
    hue = (category / cfg.categories + rng.uniform(0.0, 0.25 / cfg.categories)) % 1.0
    color = colorsys.hsv_to_rgb(hue, 0.85, 0.95)
    return Glyph(
        vertices=count,
        color=tuple(color),
        aspect=float(rng.uniform(0.7, 1.0)),
        rotation=float(rng.uniform(0.0, 2 * math.pi)),
        radial=radial,
    )


def instance_glyph(cfg, category, instance):
    """The category glyph with a small per-instance shape and color change."""
    base = category_glyph(cfg, category)
    rng = _stream(cfg, _INSTANCE_STREAM, category, instance)
    color = np.clip(np.array(base.color) + rng.normal(0.0, 0.04, 3), 0.0, 1.0)
    radial = np.array(base.radial) * rng.uniform(0.9, 1.0, len(base.radial))
    return Glyph(
        vertices=base.vertices,
        color=tuple(float(v) for v in color),
        aspect=float(np.clip(base.aspect * rng.uniform(0.9, 1.1), 0.5, 1.0)),
        rotation=base.rotation + float(rng.uniform(-0.3, 0.3)),
        radial=tuple(float(r) for r in radial),
    )


def glyph_polygon(glyph, center, size, rotation_jitter=0.0):
    cx, cy = center
    half = size / 2.0
    points = []
    for k, radius in enumerate(glyph.radial):
        angle = glyph.rotation + rotation_jitter + 2 * math.pi * k / glyph.vertices
        points.append((
            cx + half * radius * math.cos(angle),
            cy + half * radius * glyph.aspect * math.sin(angle),
        ))
    return points


# ============================================================================
# DOMAIN STYLES
# ============================================================================

def domain_style(cfg, domain):
    styled = 1 if cfg.identical_domains else domain
    if cfg.mode == "translation":
        return DomainStyle(
            background="stripes" if styled == 1 else "blotches",
            placement="left" if styled == 1 else "right",
            scale=(0.30, 0.40),
            brightness=cfg.brightness[styled - 1],
            contrast=cfg.contrast[styled - 1],
        )
    return DomainStyle(
        background="speckle",
        placement="anywhere",
        scale=(0.15, 0.25) if styled == 1 else (0.55, 0.75),
        brightness=0.0,
        contrast=1.0,
    )


def _background(kind, side, rng):
    rows, cols = np.mgrid[0:side, 0:side].astype(np.float64)
    if kind == "stripes":
        angle = rng.uniform(-0.3, 0.3)
        period = rng.uniform(5.0, 8.0)
        phase = rng.uniform(0.0, 2 * math.pi)
        wave = 0.5 + 0.4 * np.sin(2 * math.pi * (rows * math.cos(angle) + cols * math.sin(angle)) / period + phase)
        light, dark = np.array([0.55, 0.75, 0.45]), np.array([0.2, 0.3, 0.15])
    elif kind == "blotches":
        coarse = Image.fromarray((rng.random((6, 6)) * 255).astype(np.uint8), mode="L")
        wave = np.asarray(coarse.resize((side, side), Image.Resampling.BILINEAR), dtype=np.float64) / 255.0
        light, dark = np.array([0.5, 0.55, 0.85]), np.array([0.15, 0.15, 0.35])
    else:
        wave = np.clip(0.5 + 0.12 * rng.standard_normal((side, side)), 0.0, 1.0)
        light, dark = np.array([0.62, 0.6, 0.58]), np.array([0.38, 0.37, 0.36])
    wave = wave[..., None]
    return wave * light + (1.0 - wave) * dark


def _center(placement, side, size, rng):
    half = size / 2.0
    low_x, high_x = half, side - half
    if placement == "left":
        high_x = side / 2.0 - half
    elif placement == "right":
        low_x = side / 2.0 + half
    return rng.uniform(low_x, max(low_x, high_x)), rng.uniform(half, side - half)


# ============================================================================
# RENDERING
# ============================================================================

def image_id(domain, category, instance, frame):
    return f"d{domain}-c{category:02d}-i{instance:02d}-f{frame:03d}"


def render_image(cfg, domain, category, instance, frame):
    """Render one frame; returns a LabeledImage with its ground-truth box."""
    style = domain_style(cfg, domain)
    glyph = instance_glyph(cfg, category, instance)
    rng = _stream(cfg, _FRAME_STREAM, domain, category, instance, frame)
    side = cfg.side

    background = _background(style.background, side, rng)
    size = side * rng.uniform(*style.scale)
    center = _center(style.placement, side, size, rng)
    points = glyph_polygon(glyph, center, size, rotation_jitter=rng.uniform(-0.2, 0.2))

    canvas = Image.fromarray(np.floor(background * 255.0 + 0.5).astype(np.uint8), mode="RGB")
    mask = Image.new("L", (side, side), 0)
    fill = tuple(int(round(v * 255)) for v in glyph.color)
    ImageDraw.Draw(canvas).polygon(points, fill=fill)
    ImageDraw.Draw(mask).polygon(points, fill=255)

    pixels = np.asarray(canvas, dtype=np.float64) / 255.0
    pixels = np.clip(style.contrast * (pixels - 0.5) + 0.5 + style.brightness, 0.0, 1.0)
    return LabeledImage(
        image_id=image_id(domain, category, instance, frame),
        pixels=np.floor(pixels * 255.0 + 0.5).astype(np.uint8),
        category=category,
        instance=f"c{category:02d}-i{instance:02d}",
        domain=domain,
        frame=frame,
        box=mask.getbbox(),
    )


def synth_dataset(cfg):
    """
    Generate both domains: categories × split[d] instances × frames images per
    domain, ordered by domain, category, instance, frame.
    """
    cfg.validate()
    images = [
        render_image(cfg, domain, category, instance, frame)
        for domain in (1, 2)
        for category in range(cfg.categories)
        for instance in cfg.domain_instances(domain)
        for frame in range(cfg.frames)
    ]
    dataset = Dataset(
        images=images,
        categories=cfg.categories,
        side=cfg.side,
        origin=f"synth:{cfg.mode}",
        category_names=[f"c{c:02d}" for c in range(cfg.categories)],
    )
    counts = dataset.counts()
    logger.info(
        "Synthesised %s dataset: %d images in domain 1, %d in domain 2",
        cfg.mode, counts[1], counts[2],
    )
    return dataset


def rendered_glyph_color(cfg, item):
    """The glyph's RGB after the domain illumination, as stored in ``pixels``."""
    style = domain_style(cfg, item.domain)
    instance = int(item.instance.rsplit("-i", 1)[1])
    glyph = instance_glyph(cfg, item.category, instance)
    fill = np.array([round(v * 255) for v in glyph.color], dtype=np.float64) / 255.0
    lit = np.clip(style.contrast * (fill - 0.5) + 0.5 + style.brightness, 0.0, 1.0)
    return np.floor(lit * 255.0 + 0.5)


def box_coverage(cfg, item, tolerance=8):
    """
    Fraction of glyph-colored pixels that fall inside the image's box; a
    pixel is glyph-colored when every channel is within ``tolerance``.
    """
    if item.box is None:
        return 0.0
    color = rendered_glyph_color(cfg, item)
    close = np.all(np.abs(item.pixels.astype(np.float64) - color) <= tolerance, axis=-1)
    total = int(close.sum())
    if total == 0:
        return 1.0
    x0, y0, x1, y1 = item.box
    return float(close[y0:y1, x0:x1].sum()) / total
