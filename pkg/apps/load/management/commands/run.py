"""
Run the full adaptation experiment: every configured direction and seed.

    python manage.py run --config experiment.ini --protocol sub-target
    python manage.py run --config experiment.ini --ablate-pooling

Writes config.ini, metrics.csv, audit.tsv and one directory per repeat
(checkpoints and per-repeat metrics). Repeats that fail are logged and
reported; the run then exits with the first failure's code.
"""

from django.conf import settings

from ...data import PROTOCOLS
from ...exceptions import RepeatsFailed
from ...experiments import Workbench, ablate_pooling, run_experiment
from ...forms import DIRECTIONS, MODEL_PRESETS
from ..base import LoadCommand


class Command(LoadCommand):
    help = "Run the adaptation experiment over all repeats and write metrics.csv"
    subcommand = "run"

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument("--protocol", choices=PROTOCOLS, help="Override [protocol] protocol")
        parser.add_argument("--direction", choices=DIRECTIONS, help="Override [protocol] direction")
        parser.add_argument("--preset", choices=MODEL_PRESETS, help="Override [model] preset")
        parser.add_argument("--ablate-pooling", action="store_true", help="Run the p6/p4/p3 pooling presets")
        parser.add_argument("--workers", type=int, help="Forked worker processes (default LOAD_WORKERS)")

    def config_overrides(self, options):
        overrides = super().config_overrides(options)
        for option, key in (("protocol", "protocol.protocol"),
                            ("direction", "protocol.direction"),
                            ("preset", "model.preset")):
            if options.get(option):
                overrides[key] = options[option]
        if options.get("ablate_pooling"):
            overrides["run.ablate_pooling"] = True
        return overrides

    def execute_run(self, config, manifest, run, /, *args, **options):
        bench = Workbench(config, cache_dir=settings.LOAD_CACHE_DIR)
        kwargs = dict(
            out_dir=manifest.output_dir,
            workers=options.get("workers") or settings.LOAD_WORKERS,
            cache_dir=settings.LOAD_CACHE_DIR,
            persist_bundles=settings.LOAD_PERSIST_BUNDLES,
        )
        if config.run.ablate_pooling:
            rows = ablate_pooling(config, bench, **kwargs)
            self.report_ablation(run, rows)
            failures = [o for row in rows for o in row.result.failures]
        else:
            result = run_experiment(config, bench, **kwargs)
            self.report_experiment(run, result)
            failures = result.failures
        if failures:
            raise RepeatsFailed(failures)

    def report_experiment(self, run, result):
        for record in result.records:
            run.record_outcomes(record)
            self.say(record.summary())
        if len(result.records) > 1:
            self.say(f"average over directions: {result.direction_average():.2f}")
        self.success(f"Metrics written to {result.out_dir}")

    def report_ablation(self, run, rows):
        self.say(f"{'preset':<8}{'pool':>6}{'fc':>7}{'fc in':>8}  {'direction':<9}  target mean ± std")
        for row in rows:
            for record in row.records:
                run.record_outcomes(record)
                self.say(
                    f"{row.preset.name:<8}{row.preset.pool_side:>6}{row.preset.fc_width:>7}"
                    f"{row.fc_input_width:>8}  {record.direction:<9}  {record.mean:.2f} ± {record.std:.2f}"
                )
        self.success("Ablation metrics written")
