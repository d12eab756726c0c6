"""
Pooling ablation: the run command with the p6 / p4 / p3 presets forced on.
"""

from .run import Command as RunCommand


class Command(RunCommand):
    help = "Compare the p6/p4/p3 pooling presets under shared seeds"
    subcommand = "ablate"
    default_out_suffix = "ablate"

    def config_overrides(self, options):
        overrides = super().config_overrides(options)
        overrides["run.ablate_pooling"] = True
        return overrides
