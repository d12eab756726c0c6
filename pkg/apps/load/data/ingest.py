"""
LoAd Platform - Dataset Files

Reading and writing image folders:
    - load_image_dir: ingest root/<domain>/<category>/<instance>/*.ppm
    - write_dataset: write a dataset in that same layout plus a manifest
    - write_manifest / read_manifest: tab-separated path, domain, category,
      instance records (UTF-8, one per line)

Created:    2026
License:    MIT - See LICENSE file
"""

import csv
import logging
from pathlib import Path

import numpy as np
from PIL import Image

from ..exceptions import DataError
from ..serialization import read_ppm, write_ppm
from .synth import Dataset, LabeledImage

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.tsv"


def _subdirs(path):
    return sorted(p for p in path.iterdir() if p.is_dir() and not p.name.startswith("."))


def _resize(pixels, side, path):
    if pixels.shape[0] == side and pixels.shape[1] == side:
        return pixels
    try:
        resized = Image.fromarray(pixels, mode="RGB").resize((side, side), Image.Resampling.BILINEAR)
    except (OSError, ValueError) as exc:
        raise DataError(f"{path}: cannot resize: {exc}") from exc
    return np.asarray(resized, dtype=np.uint8)


def load_image_dir(root, side=64):
    """
    Ingest a two-domain image folder.

    Domains are the two sorted top-level directories (first -> domain 1).
    Category indices follow the sorted union of category directory names.
    """
    root = Path(root)
    if not root.is_dir():
        raise DataError(f"{root}: dataset directory does not exist")

    domain_dirs = _subdirs(root)
    if len(domain_dirs) != 2:
        names = ", ".join(d.name for d in domain_dirs) or "none"
        raise DataError(f"{root}: expected exactly 2 domain directories, found {len(domain_dirs)} ({names})")

    category_names = sorted({c.name for d in domain_dirs for c in _subdirs(d)})
    if len(category_names) < 2:
        raise DataError(f"{root}: need at least 2 category directories, found {len(category_names)}")
    category_index = {name: k for k, name in enumerate(category_names)}

    images = []
    for domain, domain_dir in enumerate(domain_dirs, start=1):
        for category_dir in _subdirs(domain_dir):
            instance_dirs = _subdirs(category_dir)
            if not instance_dirs:
                raise DataError(f"{category_dir}: category directory has no instance directories")
            for instance_dir in instance_dirs:
                files = sorted(instance_dir.glob("*.ppm"))
                if not files:
                    raise DataError(f"{instance_dir}: instance directory has no .ppm images")
                for frame, path in enumerate(files):
                    pixels = _resize(read_ppm(path), side, path)
                    images.append(LabeledImage(
                        image_id=f"d{domain}-{category_dir.name}-{instance_dir.name}-{path.stem}",
                        pixels=pixels,
                        category=category_index[category_dir.name],
                        instance=f"{category_dir.name}/{instance_dir.name}",
                        domain=domain,
                        frame=frame,
                        path=str(path),
                    ))

    dataset = Dataset(
        images=images,
        categories=len(category_names),
        side=side,
        origin=f"dir:{root}",
        category_names=category_names,
    )
    counts = dataset.counts()
    logger.info("Ingested %s: %d images in domain 1, %d in domain 2", root, counts[1], counts[2])
    return dataset


def dataset_path(item):
    """Relative path of an image inside a written dataset."""
    return Path(f"d{item.domain}") / f"c{item.category:02d}" / item.instance.replace("/", "_") / f"f{item.frame:03d}.ppm"


def write_dataset(dataset, root):
    """Write every image as PPM under ``root`` and a manifest next to them."""
    root = Path(root)
    for item in dataset.images:
        relative = dataset_path(item)
        write_ppm(root / relative, item.pixels)
        item.path = str(relative)
    manifest = write_manifest(dataset.images, root / MANIFEST_NAME)
    logger.info("Wrote %d images to %s", len(dataset.images), root)
    return manifest


def write_manifest(images, path):
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="") as handle:
            writer = csv.writer(handle, delimiter="\t", lineterminator="\n")
            for item in images:
                writer.writerow([item.path, item.domain, item.category, item.instance])
    except OSError as exc:
        raise DataError(f"{path}: cannot write manifest: {exc}") from exc
    return path


def read_manifest(path):
    """Manifest rows as (path, domain, category, instance) tuples."""
    path = Path(path)
    try:
        with open(path, encoding="utf-8", newline="") as handle:
            rows = list(csv.reader(handle, delimiter="\t"))
    except OSError as exc:
        raise DataError(f"{path}: cannot read manifest: {exc}") from exc
    records = []
    for number, row in enumerate(rows, start=1):
        if len(row) != 4:
            raise DataError(f"{path}:{number}: expected 4 tab-separated fields, got {len(row)}")
        try:
            records.append((row[0], int(row[1]), int(row[2]), row[3]))
        except ValueError as exc:
            raise DataError(f"{path}:{number}: {exc}") from exc
    return records
