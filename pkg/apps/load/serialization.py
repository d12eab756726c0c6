"""
LoAd Platform - Serialization Formats

Bit-exact on-disk formats shared by every part of the pipeline:

    - Checkpoints: "LOADNET1" magic, u32 format version, u32 tensor count,
      then per tensor u32 name length, UTF-8 name, u32 rank, u32 dims and a
      little-endian float32 row-major payload; a trailing CRC32 covers all
      preceding bytes. Architecture metadata rides in a JSON sidecar.
    - Images: binary PGM (P5) and PPM (P6) with maxval 255, written and
      decoded through Pillow.

All integers are little-endian.

Created:    2026
License:    MIT - See LICENSE file
"""

import hashlib
import json
import logging
import os
import struct
import tempfile
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .exceptions import DataError

logger = logging.getLogger(__name__)

MAGIC = b"LOADNET1"
FORMAT_VERSION = 1

_U32 = struct.Struct("<I")


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

def dumps_checkpoint(tensors):
    """Encode an ordered name -> array mapping into checkpoint bytes."""
    parts = [MAGIC, _U32.pack(FORMAT_VERSION), _U32.pack(len(tensors))]
    for name, array in tensors.items():
        encoded = name.encode("utf-8")
        array = np.ascontiguousarray(array, dtype="<f4")
        parts.append(_U32.pack(len(encoded)))
        parts.append(encoded)
        parts.append(_U32.pack(array.ndim))
        parts.append(struct.pack(f"<{array.ndim}I", *array.shape))
        parts.append(array.tobytes())
    body = b"".join(parts)
    return body + _U32.pack(zlib.crc32(body) & 0xFFFFFFFF)


def loads_checkpoint(blob, source="<bytes>"):
    """Decode checkpoint bytes; any corruption is a DataError naming ``source``."""
    if len(blob) < len(MAGIC) + 3 * _U32.size:
        raise DataError(f"{source}: checkpoint truncated ({len(blob)} bytes)")
    body, trailer = blob[:-_U32.size], blob[-_U32.size:]
    expected = _U32.unpack(trailer)[0]
    actual = zlib.crc32(body) & 0xFFFFFFFF
    if expected != actual:
        raise DataError(f"{source}: CRC mismatch (stored {expected:08x}, computed {actual:08x})")
    if body[:len(MAGIC)] != MAGIC:
        raise DataError(f"{source}: bad magic {body[:len(MAGIC)]!r}")

    offset = len(MAGIC)

    def take(count):
        nonlocal offset
        if offset + count > len(body):
            raise DataError(f"{source}: checkpoint truncated at byte {offset}")
        chunk = body[offset:offset + count]
        offset += count
        return chunk

    version = _U32.unpack(take(4))[0]
    if version != FORMAT_VERSION:
        raise DataError(f"{source}: unsupported checkpoint version {version}")
    count = _U32.unpack(take(4))[0]

    tensors = {}
    for _ in range(count):
        name_length = _U32.unpack(take(4))[0]
        try:
            name = take(name_length).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise DataError(f"{source}: tensor name is not UTF-8") from exc
        rank = _U32.unpack(take(4))[0]
        dims = struct.unpack(f"<{rank}I", take(4 * rank))
        size = int(np.prod(dims, dtype=np.int64))
        payload = np.frombuffer(take(4 * size), dtype="<f4")
        tensors[name] = payload.reshape(dims).astype(np.float32)
    if offset != len(body):
        raise DataError(f"{source}: {len(body) - offset} trailing bytes after last tensor")
    return tensors


def checkpoint_digest(tensors):
    """SHA-256 of the encoded checkpoint; identifies a set of weights."""
    return hashlib.sha256(dumps_checkpoint(tensors)).hexdigest()


def write_atomic(path, blob):
    """Write bytes to ``path`` via a temp file in the same directory and rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(blob)
        os.replace(tmp, path)
    except OSError as exc:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise DataError(f"{path}: write failed: {exc}") from exc


@dataclass
class ModelCheckpoint:
    """Named tensors plus the architecture metadata needed to rebuild a model."""

    tensors: dict
    metadata: dict = field(default_factory=dict)

    def to_bytes(self):
        return dumps_checkpoint(self.tensors)

    def digest(self):
        return checkpoint_digest(self.tensors)

    @staticmethod
    def metadata_path(path):
        path = Path(path)
        return path.with_name(path.name + ".json")

    def save(self, path):
        path = Path(path)
        write_atomic(path, self.to_bytes())
        if self.metadata:
            text = json.dumps(self.metadata, indent=2, sort_keys=True)
            write_atomic(self.metadata_path(path), text.encode("utf-8"))
        logger.debug("Saved checkpoint %s (%d tensors)", path, len(self.tensors))
        return path

    @classmethod
    def load(cls, path):
        path = Path(path)
        try:
            blob = path.read_bytes()
        except OSError as exc:
            raise DataError(f"{path}: cannot read checkpoint: {exc}") from exc
        metadata = {}
        meta_path = cls.metadata_path(path)
        if meta_path.exists():
            try:
                metadata = json.loads(meta_path.read_text(encoding="utf-8"))
            except (OSError, ValueError) as exc:
                raise DataError(f"{meta_path}: unreadable metadata: {exc}") from exc
        return cls(tensors=loads_checkpoint(blob, source=str(path)), metadata=metadata)


# ---------------------------------------------------------------------------
# PGM / PPM
# ---------------------------------------------------------------------------

def read_pnm_header(path):
    """Return (magic, width, height, maxval) of a binary PNM file."""
    tokens = []
    try:
        with open(path, "rb") as handle:
            while len(tokens) < 4:
                line = handle.readline()
                if not line:
                    break
                line = line.split(b"#", 1)[0]
                tokens.extend(line.split())
    except OSError as exc:
        raise DataError(f"{path}: cannot read image: {exc}") from exc
    if len(tokens) < 4:
        raise DataError(f"{path}: malformed PNM header")
    try:
        magic = tokens[0].decode("ascii")
        width, height, maxval = (int(t) for t in tokens[1:4])
    except (UnicodeDecodeError, ValueError) as exc:
        raise DataError(f"{path}: malformed PNM header") from exc
    return magic, width, height, maxval


def _read_pnm(path, magic, mode):
    found, _, _, maxval = read_pnm_header(path)
    if found != magic:
        raise DataError(f"{path}: expected {magic} image, found {found}")
    if maxval != 255:
        raise DataError(f"{path}: maxval {maxval} not supported (only 255)")
    try:
        with Image.open(path) as image:
            image.load()
            if image.mode != mode:
                raise DataError(f"{path}: decoded mode {image.mode}, expected {mode}")
            return np.array(image, dtype=np.uint8)
    except (OSError, SyntaxError, UnidentifiedImageError) as exc:
        raise DataError(f"{path}: malformed {magic} image: {exc}") from exc


def read_ppm(path):
    """Binary PPM (P6, maxval 255) -> H×W×3 uint8."""
    return _read_pnm(path, "P6", "RGB")


def read_pgm(path):
    """Binary PGM (P5, maxval 255) -> H×W uint8."""
    return _read_pnm(path, "P5", "L")


def _write_pnm(path, array, mode):
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        Image.fromarray(np.ascontiguousarray(array, dtype=np.uint8), mode=mode).save(path, format="PPM")
    except OSError as exc:
        raise DataError(f"{path}: write failed: {exc}") from exc
    return path


def write_ppm(path, rgb):
    """H×W×3 uint8 -> binary PPM (P6, maxval 255)."""
    rgb = np.asarray(rgb)
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise DataError(f"{path}: PPM needs an H×W×3 array, got {rgb.shape}")
    return _write_pnm(path, rgb, "RGB")


def write_pgm(path, gray):
    """H×W uint8 -> binary PGM (P5, maxval 255)."""
    gray = np.asarray(gray)
    if gray.ndim != 2:
        raise DataError(f"{path}: PGM needs an H×W array, got {gray.shape}")
    return _write_pnm(path, gray, "L")


def to_uint8(values):
    """Map [0, 1] floats to 0..255 with round-half-up."""
    return np.floor(np.clip(values, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)
