"""
LoAd Platform - Data Package

Datasets for the adaptation experiments, organised as:
    - synth: procedural two-domain generator (translation and scale shifts)
    - ingest: image-folder ingestion, dataset writing and manifests
    - splits: protocol roles (source train/test, target adapt/test)

Created:    2026
License:    MIT - See LICENSE file
"""

from .synth import (
    Dataset,
    ImageSequence,
    LabeledImage,
    SynthConfig,
    box_coverage,
    category_glyph,
    domain_style,
    image_id,
    instance_glyph,
    render_image,
    synth_dataset,
)

from .ingest import (
    MANIFEST_NAME,
    load_image_dir,
    read_manifest,
    write_dataset,
    write_manifest,
)

from .splits import (
    PROTOCOLS,
    DatasetSplit,
    check_sub_categories,
    default_sub_categories,
    make_splits,
)

__all__ = [
    # Synthetic data
    "Dataset",
    "ImageSequence",
    "LabeledImage",
    "SynthConfig",
    "box_coverage",
    "category_glyph",
    "domain_style",
    "image_id",
    "instance_glyph",
    "render_image",
    "synth_dataset",
    # Files
    "MANIFEST_NAME",
    "load_image_dir",
    "read_manifest",
    "write_dataset",
    "write_manifest",
    # Splits
    "PROTOCOLS",
    "DatasetSplit",
    "check_sub_categories",
    "default_sub_categories",
    "make_splits",
]
