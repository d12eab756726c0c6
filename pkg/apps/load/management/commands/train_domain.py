"""
Train the domain discriminator for the first configured direction and seed.

Writes discriminator.ckpt (+ .json metadata) and audit.tsv into the output
directory and prints the held-out domain accuracy.
"""

from django.conf import settings

from ...experiments import (
    AUDIT_FILENAME,
    DISCRIMINATOR_FILENAME,
    Workbench,
    direction_label,
    fit_discriminator,
    repeat_split,
    repeat_streams,
    save_discriminator,
    write_audit,
)
from ..base import LoadCommand


class Command(LoadCommand):
    help = "Train the domain discriminator and save its checkpoint"
    subcommand = "train-domain"
    default_out_suffix = "domain"

    def execute_run(self, config, manifest, run, /, *args, **options):
        bench = Workbench(config, cache_dir=settings.LOAD_CACHE_DIR)
        source_domain = config.directions()[0]
        seed = config.seeds()[0]
        split_seq, disc_seq, _ = repeat_streams(seed, source_domain)
        split = repeat_split(bench, source_domain, split_seq)

        disc, audit, score = fit_discriminator(bench, split, disc_seq)
        path = save_discriminator(
            disc, manifest.output_dir / DISCRIMINATOR_FILENAME, config, source_domain, seed
        )
        write_audit(audit.rows(), manifest.output_dir / AUDIT_FILENAME)

        self.say(f"Direction {direction_label(source_domain)}, seed {seed}")
        self.say(f"Discriminator fed {len(audit.seen)} distinct images")
        self.success(f"Domain accuracy {score:.2f}%, checkpoint {path}")
