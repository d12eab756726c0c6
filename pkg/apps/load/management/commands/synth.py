"""
Render the synthetic two-domain dataset to PPM files plus a manifest.

    python manage.py synth --config experiment.ini --out data/desk
"""

from ...data import MANIFEST_NAME, write_dataset
from ...experiments import load_dataset
from ...exceptions import ConfigError
from ..base import LoadCommand


class Command(LoadCommand):
    help = "Render the synthetic dataset (PPM images and manifest.tsv)"
    subcommand = "synth"
    default_out_suffix = "synth"

    def execute_run(self, config, manifest, run, /, *args, **options):
        if config.dataset.source != "synth":
            raise ConfigError("synth needs dataset.source = synth")
        dataset = load_dataset(config)
        write_dataset(dataset, manifest.output_dir)
        counts = dataset.counts()
        self.success(
            f"Wrote {len(dataset)} images ({counts[1]} in domain 1, {counts[2]} in domain 2) "
            f"to {manifest.output_dir} with {MANIFEST_NAME}"
        )
