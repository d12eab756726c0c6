"""
Train one LoAd classifier (first configured direction and seed) and save it.

With --discriminator the given checkpoint supplies the domainness maps;
otherwise a discriminator is trained first.
"""

from django.conf import settings

from ...conf import config_hash
from ...exceptions import ConfigError, RepeatsFailed
from ...experiments import (
    AUDIT_FILENAME,
    METRICS_FILENAME,
    MetricsRecord,
    Workbench,
    direction_label,
    restore_discriminator,
    run_repeat,
    write_audit,
    write_metrics,
)
from ..base import LoadCommand


class Command(LoadCommand):
    help = "Train the LoAd classifier for one repeat and save classifier.ckpt"
    subcommand = "train-load"
    default_out_suffix = "load"

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument("--discriminator", help="Reuse this discriminator checkpoint")

    def execute_run(self, config, manifest, run, /, *args, **options):
        disc = None
        if options.get("discriminator"):
            if config.model.preset == "baseline-plain":
                raise ConfigError("--discriminator has no use with the baseline-plain preset")
            disc, _ = restore_discriminator(config, options["discriminator"])

        bench = Workbench(config, cache_dir=settings.LOAD_CACHE_DIR)
        source_domain = config.directions()[0]
        seed = config.seeds()[0]
        bundle_root = manifest.output_dir / "bundles" if settings.LOAD_PERSIST_BUNDLES else None
        outcome = run_repeat(bench, source_domain, 0, seed, manifest.output_dir, bundle_root, disc=disc)

        record = MetricsRecord(
            config_hash=config_hash(config),
            direction=direction_label(source_domain),
            protocol=config.protocol.protocol,
            preset=config.model.preset,
            outcomes=[outcome],
        )
        write_metrics([record], manifest.output_dir / METRICS_FILENAME)
        write_audit(outcome.audit, manifest.output_dir / AUDIT_FILENAME)
        run.record_outcomes(record)
        if not outcome.completed:
            raise RepeatsFailed([outcome])
        self.success(
            f"{record.direction}: source test {outcome.source_test_acc:.2f}%, "
            f"target {outcome.target_acc:.2f}%, domain {outcome.domain_acc:.2f}%"
        )
