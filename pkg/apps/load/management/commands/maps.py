"""
Export domainness maps for chosen images from a discriminator checkpoint.

Every image gets its domain-specific and domain-generic map, each as a
PGM heatmap plus an overlay PPM, and maps.tsv indexes the written files:

    python manage.py maps --checkpoint runs/<hash>-domain/discriminator.ckpt \\
        d1-c00-i00-f000 d2-c00-i06-f000
"""

import csv

from ...domainness import center_of_mass, domain_generic_bundle, domain_specific_bundle, render_map
from ...exceptions import ConfigError, DataError
from ...experiments import load_dataset, restore_discriminator
from ..base import LoadCommand

MAPS_INDEX = "maps.tsv"


class Command(LoadCommand):
    help = "Write domain-specific and domain-generic maps (PGM + overlay PPM) per image"
    subcommand = "maps"
    default_out_suffix = "maps"

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument("image_ids", nargs="*", help="Image ids such as d1-c00-i00-f000")
        parser.add_argument("--checkpoint", required=True, help="Discriminator checkpoint (.ckpt)")
        parser.add_argument(
            "--first",
            type=int,
            default=0,
            help="Also export the first N frames of each domain",
        )

    def execute_run(self, config, manifest, run, /, *args, **options):
        dataset = load_dataset(config)
        by_id = dataset.by_id()
        items = []
        unknown = [image_id for image_id in options["image_ids"] if image_id not in by_id]
        if unknown:
            raise DataError(f"unknown image ids: {', '.join(unknown)}")
        items.extend(by_id[image_id] for image_id in options["image_ids"])
        for domain in (1, 2):
            items.extend(dataset.domain(domain)[:options["first"]])
        if not items:
            raise ConfigError("name at least one image id or pass --first N")

        disc, _ = restore_discriminator(config, options["checkpoint"])
        mode = config.protocol.score_mode
        rows = []
        for item in items:
            features = disc.features(item.image).data
            for kind, build in (("specific", domain_specific_bundle), ("generic", domain_generic_bundle)):
                bundle = build(disc, None, item.domain, mode, features=features)
                pgm_path, ppm_path = render_map(
                    bundle.heatmap,
                    item.pixels,
                    manifest.output_dir / f"{item.image_id}.d{bundle.domain}",
                )
                center = center_of_mass(bundle.heatmap, item.side, item.side)
                rows.append([
                    item.image_id, item.domain, bundle.domain, kind,
                    pgm_path.name, ppm_path.name,
                    "" if center is None else f"{center[0]:.2f}",
                    "" if center is None else f"{center[1]:.2f}",
                ])

        index = manifest.output_dir / MAPS_INDEX
        try:
            with open(index, "w", encoding="utf-8", newline="") as handle:
                writer = csv.writer(handle, delimiter="\t", lineterminator="\n")
                writer.writerow(["image_id", "domain", "label", "kind", "heatmap", "overlay", "center_x", "center_y"])
                writer.writerows(rows)
        except OSError as exc:
            raise DataError(f"{index}: cannot write map index: {exc}") from exc
        self.success(f"Wrote {len(rows)} maps for {len(items)} images to {manifest.output_dir}")
