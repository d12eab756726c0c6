"""
Measure the domain shift with a linear probe on fc7 features.

For each configured direction and seed a plain classifier is trained on
source-train; a logistic-regression probe fitted on its fc7 features is
scored on source-test (S->S) and on the whole target domain (S->T).
"""

from django.conf import settings

from ...experiments import PROBE_FILENAME, Workbench, probe_experiment, summarize_probe
from ..base import LoadCommand


class Command(LoadCommand):
    help = "Linear-probe accuracy S->S vs S->T on fc7 features"
    subcommand = "probe"
    default_out_suffix = "probe"

    def execute_run(self, config, manifest, run, /, *args, **options):
        bench = Workbench(config, cache_dir=settings.LOAD_CACHE_DIR)
        results = probe_experiment(config, bench, manifest.output_dir)
        self.say(f"{'direction':<10}{'S->S':>8}{'S->T':>8}{'gap':>8}")
        for direction, (same, shifted, gap) in summarize_probe(results).items():
            self.say(f"{direction:<10}{same:>8.2f}{shifted:>8.2f}{gap:>8.2f}")
        self.success(f"Probe results written to {manifest.output_dir / PROBE_FILENAME}")
