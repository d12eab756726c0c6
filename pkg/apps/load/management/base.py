"""
LoAd Platform - Management Command Base

Shared plumbing for the ``manage.py`` subcommands:
    - LoadCommand: common flags (--config, --out, --seed, --repeats, --force,
      --set), config loading, and LoadError -> CommandError translation
    - RunManifest: output directory ownership, backed by the run registry
      and a ``run.json`` marker inside the directory

Created:    2026
License:    MIT - See LICENSE file
"""

import json
import logging
from dataclasses import dataclass
from pathlib import Path

from django.conf import settings
from django.core.management.base import BaseCommand, CommandError
from django.db import transaction

from ..conf import CONFIG_FILENAME, config_hash, dump_config, load_config
from ..exceptions import ConfigError, DataError, LoadError
from ..models import ExperimentRun, RunStatus
from ..serialization import write_atomic

logger = logging.getLogger(__name__)

MARKER_FILENAME = "run.json"


# ============================================================================
# RUN MANIFEST
# ============================================================================

@dataclass
class RunManifest:
    subcommand: str
    config_path: str
    output_dir: Path
    seed: int = None
    verbosity: int = 1
    force: bool = False

    @property
    def marker_path(self):
        return self.output_dir / MARKER_FILENAME

    def _marker_status(self):
        try:
            return json.loads(self.marker_path.read_text(encoding="utf-8")).get("status")
        except FileNotFoundError:
            return None
        except (OSError, ValueError) as exc:
            raise DataError(f"{self.marker_path}: unreadable run marker: {exc}") from exc

    def _write_marker(self, run):
        payload = {
            "subcommand": run.subcommand,
            "config_hash": run.config_hash,
            "status": run.status,
            "started_at": run.started_at.isoformat(),
            "finished_at": run.finished_at.isoformat() if run.finished_at else None,
        }
        write_atomic(self.marker_path, (json.dumps(payload, indent=2) + "\n").encode("utf-8"))

    @transaction.atomic
    def open(self, config):
        """
        Claim the output directory for this run and echo the effective config.

        A directory holding a completed run is refused unless ``force``; a
        forced rerun drops the earlier repeat rows.
        """
        key = str(self.output_dir.resolve())
        previous = ExperimentRun.objects.filter(output_dir=key).first()
        completed = (previous is not None and previous.is_completed) or self._marker_status() == RunStatus.COMPLETED
        if completed and not self.force:
            raise ConfigError(
                f"{self.output_dir} already holds a completed run; pass --force to overwrite it"
            )
        if previous is not None:
            if completed:
                logger.warning("Overwriting completed run in %s", self.output_dir)
            previous.delete()

        try:
            self.output_dir.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise DataError(f"{self.output_dir}: cannot create output directory: {exc}") from exc
        text = dump_config(config)
        write_atomic(self.output_dir / CONFIG_FILENAME, text.encode("utf-8"))
        run = ExperimentRun.objects.create(
            subcommand=self.subcommand,
            output_dir=key,
            config_hash=config_hash(config),
            config_text=text,
        )
        self._write_marker(run)
        return run

    def close(self, run, status, error=""):
        run.finish(status, error)
        self._write_marker(run)


# ============================================================================
# COMMAND BASE
# ============================================================================

class LoadCommand(BaseCommand):
    """
    Base for every LoAd subcommand.

    Subclasses implement ``execute_run(config, manifest, run, **options)``;
    any LoadError becomes a CommandError carrying the error's exit code.
    """

    subcommand = None
    # Directory name under LOAD_RUNS_DIR when --out is omitted
    default_out_suffix = None

    def add_arguments(self, parser):
        parser.add_argument("--config", help="Experiment INI file (defaults apply when omitted)")
        parser.add_argument("--out", help="Output directory (default: LOAD_RUNS_DIR/<config hash>)")
        parser.add_argument("--seed", type=int, help="Override [run] seed")
        parser.add_argument("--repeats", type=int, help="Override [run] repeats")
        parser.add_argument("--force", action="store_true", help="Overwrite a completed run")
        parser.add_argument(
            "--set",
            action="append",
            default=[],
            metavar="SECTION.KEY=VALUE",
            help="Override one config value (repeatable)",
        )

    # ------------------------------------------------------------------
    # Options -> config
    # ------------------------------------------------------------------

    def config_overrides(self, options):
        overrides = {}
        for item in options.get("set") or []:
            key, sep, value = item.partition("=")
            if not sep or "." not in key:
                raise ConfigError(f"--set expects SECTION.KEY=VALUE, got {item!r}")
            overrides[key.strip()] = value.strip()
        if options.get("seed") is not None:
            overrides["run.seed"] = options["seed"]
            overrides.setdefault("run.seeds", "")
        if options.get("repeats") is not None:
            overrides["run.repeats"] = options["repeats"]
        return overrides

    def load_experiment_config(self, options):
        return load_config(options.get("config"), self.config_overrides(options))

    def output_dir(self, config, options):
        if options.get("out"):
            return Path(options["out"])
        name = config_hash(config)
        if self.default_out_suffix:
            name = f"{name}-{self.default_out_suffix}"
        return Path(settings.LOAD_RUNS_DIR) / name

    # ------------------------------------------------------------------
    # Execution
    # ------------------------------------------------------------------

    def handle(self, *args, **options):
        try:
            config = self.load_experiment_config(options)
            manifest = RunManifest(
                subcommand=self.subcommand,
                config_path=options.get("config") or "",
                output_dir=self.output_dir(config, options),
                seed=options.get("seed"),
                verbosity=options.get("verbosity", 1),
                force=options.get("force", False),
            )
            run = manifest.open(config)
        except LoadError as exc:
            raise CommandError(str(exc), returncode=exc.exit_code) from exc

        logger.info("%s: config %s -> %s", self.subcommand, run.config_hash, manifest.output_dir)
        try:
            self.execute_run(config, manifest, run, *args, **options)
        except LoadError as exc:
            logger.error("%s failed: %s", self.subcommand, exc)
            manifest.close(run, RunStatus.FAILED, str(exc))
            raise CommandError(str(exc), returncode=exc.exit_code) from exc
        except Exception as exc:
            manifest.close(run, RunStatus.FAILED, repr(exc))
            raise
        manifest.close(run, RunStatus.COMPLETED)

    def execute_run(self, config, manifest, run, /, *args, **options):
        raise NotImplementedError("subclasses of LoadCommand must provide execute_run()")

    def say(self, message):
        self.stdout.write(message)

    def success(self, message):
        self.stdout.write(self.style.SUCCESS(message))
