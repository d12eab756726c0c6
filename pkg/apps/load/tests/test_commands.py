"""
LoAd Platform - Management Command Tests

Each subcommand end to end on the tiny configuration, with runs and caches
redirected to a temporary directory.
"""

import csv
import json
import shutil
import tempfile
from io import StringIO
from pathlib import Path

from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import TestCase, override_settings

from ..conf import config_hash, dump_config, load_config
from ..data import MANIFEST_NAME, read_manifest
from ..experiments import AUDIT_FILENAME, DISCRIMINATOR_FILENAME, METRICS_FILENAME, read_metrics
from ..management.base import MARKER_FILENAME
from ..models import ExperimentRun, RepeatResult, RunStatus
from .helpers import TINY_INI, tiny_config


class CommandTestCase(TestCase):
    def setUp(self):
        self.tmp = Path(tempfile.mkdtemp())
        self.addCleanup(shutil.rmtree, self.tmp, ignore_errors=True)
        overrides = override_settings(
            LOAD_RUNS_DIR=self.tmp / "runs",
            LOAD_CACHE_DIR=self.tmp / "cache",
            LOAD_WORKERS=1,
            LOAD_PERSIST_BUNDLES=False,
        )
        overrides.enable()
        self.addCleanup(overrides.disable)
        self.config_path = self.tmp / "tiny.ini"
        self.config_path.write_text(TINY_INI, encoding="utf-8")

    def call(self, name, *args, **options):
        out = StringIO()
        options.setdefault("config", str(self.config_path))
        call_command(name, *args, stdout=out, stderr=StringIO(), **options)
        return out.getvalue()

    def assertExitCode(self, code, name, *args, **options):
        with self.assertRaises(CommandError) as ctx:
            self.call(name, *args, **options)
        self.assertEqual(ctx.exception.returncode, code, str(ctx.exception))
        return ctx.exception


class SynthCommandTests(CommandTestCase):
    def test_writes_images_and_manifest(self):
        out_dir = self.tmp / "data"
        output = self.call("synth", out=str(out_dir))
        self.assertIn("Wrote 48 images (24 in domain 1, 24 in domain 2)", output)
        self.assertEqual(len(read_manifest(out_dir / MANIFEST_NAME)), 48)
        self.assertTrue((out_dir / "d2" / "c02" / "c02-i03" / "f003.ppm").exists())
        self.assertEqual((out_dir / "config.ini").read_text(encoding="utf-8"), dump_config(tiny_config()))

    def test_directory_source_is_rejected(self):
        self.call("synth", out=str(self.tmp / "data"))
        self.assertExitCode(1, "synth", out=str(self.tmp / "again"),
                            set=["dataset.source=directory", f"dataset.path={self.tmp / 'data'}"])


class RunCommandTests(CommandTestCase):
    def test_run_writes_metrics_and_registers_the_run(self):
        output = self.call("run", set=["run.repeats=1"])
        config = load_config(self.config_path, {"run.repeats": 1})
        out_dir = self.tmp / "runs" / config_hash(config)
        rows = read_metrics(out_dir / METRICS_FILENAME)
        self.assertEqual([row["repeat"] for row in rows], ["0", "mean"])
        self.assertEqual(rows[0]["config_hash"], config_hash(config))
        self.assertTrue((out_dir / AUDIT_FILENAME).exists())
        self.assertIn("load 1->2 whole-target: target", output)

        run = ExperimentRun.objects.get()
        self.assertEqual(run.status, RunStatus.COMPLETED)
        self.assertEqual(run.subcommand, "run")
        self.assertEqual(run.output_dir, str(out_dir.resolve()))
        self.assertIsNotNone(run.duration)
        repeat = RepeatResult.objects.get(run=run)
        self.assertAlmostEqual(repeat.target_acc, rows[0]["target_acc"], places=3)

        marker = json.loads((out_dir / MARKER_FILENAME).read_text(encoding="utf-8"))
        self.assertEqual(marker["status"], RunStatus.COMPLETED)

    def test_completed_directory_needs_force(self):
        out = str(self.tmp / "mine")
        self.call("run", out=out, repeats=1)
        error = self.assertExitCode(1, "run", out=out, repeats=1)
        self.assertIn("--force", str(error))
        self.call("run", out=out, repeats=1, force=True)
        self.assertEqual(ExperimentRun.objects.count(), 1)
        self.assertEqual(RepeatResult.objects.count(), 1)

    def test_marker_alone_protects_the_directory(self):
        out = self.tmp / "mine"
        self.call("run", out=str(out), repeats=1)
        ExperimentRun.objects.all().delete()
        self.assertExitCode(1, "run", out=str(out), repeats=1)

    def test_flags_override_the_file(self):
        self.call("run", out=str(self.tmp / "base"), repeats=1, seed=7, preset="baseline-plain",
                  protocol="sub-target")
        config = load_config(self.tmp / "base" / "config.ini")
        self.assertEqual(config.seeds(), (7,))
        self.assertEqual(config.model.preset, "baseline-plain")
        self.assertEqual(config.protocol.protocol, "sub-target")
        self.assertEqual(RepeatResult.objects.get().preset, "baseline-plain")

    def test_invalid_config_exits_with_one(self):
        error = self.assertExitCode(1, "run", set=["model.fusion=add"])
        self.assertIn("model.fusion", str(error))
        self.assertFalse(ExperimentRun.objects.exists())

    def test_malformed_set_option(self):
        self.assertExitCode(1, "run", set=["fusion"])

    def test_missing_dataset_directory_exits_with_two(self):
        self.assertExitCode(2, "run", out=str(self.tmp / "dir"), set=[
            "dataset.source=directory", f"dataset.path={self.tmp / 'absent'}",
        ])
        run = ExperimentRun.objects.get()
        self.assertEqual(run.status, RunStatus.FAILED)
        self.assertIn("does not exist", run.error)

    def test_ablation_rejects_small_maps(self):
        error = self.assertExitCode(1, "ablate", out=str(self.tmp / "ablate"))
        self.assertIn("p6", str(error))


class DiscriminatorCommandTests(CommandTestCase):
    def train_domain(self):
        out_dir = self.tmp / "domain"
        output = self.call("train_domain", out=str(out_dir))
        return out_dir, output

    def test_train_domain_writes_checkpoint_and_audit(self):
        out_dir, output = self.train_domain()
        self.assertIn("Domain accuracy", output)
        metadata = json.loads((out_dir / (DISCRIMINATOR_FILENAME + ".json")).read_text(encoding="utf-8"))
        self.assertEqual(metadata["kind"], "discriminator")
        with open(out_dir / AUDIT_FILENAME, encoding="utf-8") as handle:
            rows = list(csv.DictReader(handle, delimiter="\t"))
        self.assertTrue(rows)
        self.assertEqual({row["domain"] for row in rows}, {"1", "2"})
        self.assertEqual(ExperimentRun.objects.get().subcommand, "train-domain")

    def test_maps_for_named_images(self):
        out_dir, _ = self.train_domain()
        checkpoint = str(out_dir / DISCRIMINATOR_FILENAME)
        maps_dir = self.tmp / "maps"
        self.call("maps", "d1-c00-i00-f000", "d2-c01-i02-f001", checkpoint=checkpoint, out=str(maps_dir))
        with open(maps_dir / "maps.tsv", encoding="utf-8") as handle:
            rows = list(csv.DictReader(handle, delimiter="\t"))
        self.assertEqual([(r["image_id"], r["kind"], r["label"]) for r in rows], [
            ("d1-c00-i00-f000", "specific", "1"),
            ("d1-c00-i00-f000", "generic", "2"),
            ("d2-c01-i02-f001", "specific", "2"),
            ("d2-c01-i02-f001", "generic", "1"),
        ])
        for row in rows:
            self.assertTrue((maps_dir / row["heatmap"]).exists())
            self.assertTrue((maps_dir / row["overlay"]).exists())
        self.assertTrue((maps_dir / "d1-c00-i00-f000.d2.overlay.ppm").exists())

    def test_maps_are_deterministic(self):
        out_dir, _ = self.train_domain()
        checkpoint = str(out_dir / DISCRIMINATOR_FILENAME)
        self.call("maps", "d1-c02-i01-f002", checkpoint=checkpoint, out=str(self.tmp / "a"))
        self.call("maps", "d1-c02-i01-f002", checkpoint=checkpoint, out=str(self.tmp / "b"))
        name = "d1-c02-i01-f002.d2.pgm"
        self.assertEqual((self.tmp / "a" / name).read_bytes(), (self.tmp / "b" / name).read_bytes())

    def test_unknown_image_id_exits_with_two(self):
        out_dir, _ = self.train_domain()
        error = self.assertExitCode(2, "maps", "d9-c00-i00-f000",
                                    checkpoint=str(out_dir / DISCRIMINATOR_FILENAME),
                                    out=str(self.tmp / "maps"))
        self.assertIn("d9-c00-i00-f000", str(error))

    def test_missing_checkpoint_exits_with_two(self):
        self.assertExitCode(2, "maps", first=1, checkpoint=str(self.tmp / "absent.ckpt"),
                            out=str(self.tmp / "maps"))

    def test_train_load_reuses_the_discriminator(self):
        out_dir, _ = self.train_domain()
        load_dir = self.tmp / "load"
        output = self.call("train_load", discriminator=str(out_dir / DISCRIMINATOR_FILENAME),
                           out=str(load_dir))
        self.assertIn("1->2: source test", output)
        rows = read_metrics(load_dir / METRICS_FILENAME)
        self.assertEqual([row["repeat"] for row in rows], ["0", "mean"])
        self.assertTrue((load_dir / "classifier.ckpt").exists())
        self.assertEqual(ExperimentRun.objects.get(subcommand="train-load").repeats.count(), 1)


class ProbeCommandTests(CommandTestCase):
    def test_probe_prints_the_gap(self):
        output = self.call("probe", repeats=1, out=str(self.tmp / "probe"))
        self.assertIn("S->S", output)
        self.assertIn("1->2", output)
        lines = (self.tmp / "probe" / "probe.csv").read_text(encoding="utf-8").splitlines()
        self.assertEqual(len(lines), 2)
