"""
LoAd Platform - Checkpoint and Image File Tests
"""

import json
import struct
import tempfile
import zlib
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase
from numpy.testing import assert_array_equal

from ..exceptions import DataError
from ..nets import Trunk, build_discriminator
from ..serialization import (
    MAGIC,
    ModelCheckpoint,
    checkpoint_digest,
    dumps_checkpoint,
    loads_checkpoint,
    read_pgm,
    read_pnm_header,
    read_ppm,
    to_uint8,
    write_atomic,
    write_pgm,
    write_ppm,
)
from .helpers import MICRO_TRUNK, rng


def reseal(body):
    """Append a fresh CRC so structural errors are reached past the checksum."""
    return body + struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF)


class CheckpointTests(SimpleTestCase):
    def setUp(self):
        gen = rng(1)
        self.tensors = {
            "trunk.conv1.weight": gen.standard_normal((4, 3, 3, 3)).astype(np.float32),
            "domain.head.bias": np.array([0.25], dtype=np.float32),
            "trunk.conv1.bias": gen.standard_normal(4).astype(np.float32),
        }

    def test_round_trip_is_bitwise(self):
        loaded = loads_checkpoint(dumps_checkpoint(self.tensors))
        self.assertEqual(list(loaded), list(self.tensors))
        for name, array in self.tensors.items():
            self.assertEqual(loaded[name].tobytes(), np.asarray(array, dtype=np.float32).tobytes())

    def test_layout(self):
        blob = dumps_checkpoint({"w": np.array([[1.0, 2.0]], dtype=np.float32)})
        self.assertEqual(blob[:8], MAGIC)
        self.assertEqual(struct.unpack("<3I", blob[8:20]), (1, 1, 1))
        self.assertEqual(blob[20:21], b"w")
        self.assertEqual(struct.unpack("<3I", blob[21:33]), (2, 1, 2))
        self.assertEqual(struct.unpack("<2f", blob[33:41]), (1.0, 2.0))
        self.assertEqual(len(blob), 45)

    def test_flipped_byte_fails_the_crc(self):
        blob = bytearray(dumps_checkpoint(self.tensors))
        blob[40] ^= 0x01
        with self.assertRaisesRegex(DataError, "CRC mismatch"):
            loads_checkpoint(bytes(blob), source="w.ckpt")

    def test_truncation(self):
        blob = dumps_checkpoint(self.tensors)
        with self.assertRaisesRegex(DataError, "truncated"):
            loads_checkpoint(blob[:10])
        with self.assertRaisesRegex(DataError, "truncated"):
            loads_checkpoint(reseal(blob[:-20]))

    def test_bad_magic_and_version(self):
        body = dumps_checkpoint(self.tensors)[:-4]
        with self.assertRaisesRegex(DataError, "bad magic"):
            loads_checkpoint(reseal(b"NOTLOAD1" + body[8:]))
        with self.assertRaisesRegex(DataError, "unsupported checkpoint version 2"):
            loads_checkpoint(reseal(body[:8] + struct.pack("<I", 2) + body[12:]))

    def test_trailing_bytes(self):
        body = dumps_checkpoint(self.tensors)[:-4]
        with self.assertRaisesRegex(DataError, "trailing bytes"):
            loads_checkpoint(reseal(body + b"\x00\x00"))

    def test_digest_tracks_weights(self):
        digest = checkpoint_digest(self.tensors)
        self.assertEqual(len(digest), 64)
        changed = dict(self.tensors, **{"domain.head.bias": np.array([0.5], dtype=np.float32)})
        self.assertNotEqual(checkpoint_digest(changed), digest)


class ModelCheckpointTests(SimpleTestCase):
    def test_save_and_load_with_metadata(self):
        gen = rng(2)
        disc = build_discriminator(Trunk(MICRO_TRUNK, gen), gen)
        checkpoint = ModelCheckpoint(disc.state_dict(), {"kind": "discriminator", "seed": 3})
        with tempfile.TemporaryDirectory() as tmp:
            path = checkpoint.save(Path(tmp) / "discriminator.ckpt")
            meta = json.loads((Path(tmp) / "discriminator.ckpt.json").read_text(encoding="utf-8"))
            loaded = ModelCheckpoint.load(path)
            self.assertEqual(sorted(p.name for p in Path(tmp).iterdir()),
                             ["discriminator.ckpt", "discriminator.ckpt.json"])
        self.assertEqual(meta, {"kind": "discriminator", "seed": 3})
        self.assertEqual(loaded.metadata, meta)
        self.assertEqual(loaded.digest(), disc.digest())

        other = build_discriminator(Trunk(MICRO_TRUNK, rng(9)), rng(9))
        other.load_state_dict(loaded.tensors)
        self.assertEqual(other.digest(), disc.digest())

    def test_missing_file(self):
        with tempfile.TemporaryDirectory() as tmp:
            with self.assertRaisesRegex(DataError, "cannot read checkpoint"):
                ModelCheckpoint.load(Path(tmp) / "absent.ckpt")

    def test_write_atomic_replaces(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "nested" / "blob.bin"
            write_atomic(path, b"first")
            write_atomic(path, b"second")
            self.assertEqual(path.read_bytes(), b"second")
            self.assertEqual([p.name for p in path.parent.iterdir()], ["blob.bin"])


class ImageFileTests(SimpleTestCase):
    def test_ppm_round_trip(self):
        rgb = rng(3).integers(0, 256, size=(5, 7, 3)).astype(np.uint8)
        with tempfile.TemporaryDirectory() as tmp:
            path = write_ppm(Path(tmp) / "a.ppm", rgb)
            self.assertEqual(read_pnm_header(path), ("P6", 7, 5, 255))
            assert_array_equal(read_ppm(path), rgb)

    def test_pgm_round_trip(self):
        gray = rng(4).integers(0, 256, size=(6, 4)).astype(np.uint8)
        with tempfile.TemporaryDirectory() as tmp:
            path = write_pgm(Path(tmp) / "a.pgm", gray)
            self.assertEqual(read_pnm_header(path), ("P5", 4, 6, 255))
            assert_array_equal(read_pgm(path), gray)

    def test_header_comments_are_skipped(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "c.pgm"
            path.write_bytes(b"P5\n# made by hand\n2 1\n255\n\x00\xff")
            assert_array_equal(read_pgm(path), [[0, 255]])

    def test_wrong_kind_and_maxval(self):
        with tempfile.TemporaryDirectory() as tmp:
            gray = write_pgm(Path(tmp) / "g.pgm", np.zeros((2, 2), dtype=np.uint8))
            with self.assertRaisesRegex(DataError, "expected P6"):
                read_ppm(gray)
            deep = Path(tmp) / "deep.pgm"
            deep.write_bytes(b"P5 1 1 65535\n\x00\x00")
            with self.assertRaisesRegex(DataError, "maxval 65535"):
                read_pgm(deep)
            broken = Path(tmp) / "broken.ppm"
            broken.write_bytes(b"P6\n")
            with self.assertRaisesRegex(DataError, "malformed PNM header"):
                read_ppm(broken)

    def test_write_rejects_wrong_rank(self):
        with self.assertRaises(DataError):
            write_ppm("unused.ppm", np.zeros((2, 2), dtype=np.uint8))
        with self.assertRaises(DataError):
            write_pgm("unused.pgm", np.zeros((2, 2, 3), dtype=np.uint8))

    def test_to_uint8_rounds_half_up(self):
        assert_array_equal(to_uint8(np.array([-0.5, 0.0, 0.5, 1.0, 2.0])), [0, 0, 128, 255, 255])
