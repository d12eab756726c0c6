"""
LoAd Platform - Protocol Splits

Partitions a two-domain dataset into the four protocol roles for one
adaptation direction:

    - source_train / source_test: random probe_fraction split of the source
    - target_adapt: unlabeled target images visible during training (all of
      them for whole-target, the listed categories only for sub-target)
    - target_test: every target image, all categories

Created:    2026
License:    MIT - See LICENSE file
"""

from dataclasses import dataclass, field

import numpy as np

from ..exceptions import ConfigError

PROTOCOLS = ("whole-target", "sub-target")

DEFAULT_SUB_CATEGORIES = 8


@dataclass
class DatasetSplit:
    source_train: list
    source_test: list
    target_adapt: list
    target_test: list
    protocol: str = "whole-target"
    source_domain: int = 1
    sub_categories: tuple = field(default_factory=tuple)

    @property
    def target_domain(self):
        return 3 - self.source_domain

    @property
    def source(self):
        return self.source_train + self.source_test

    def histogram(self, role, categories):
        """Image count per category for one role."""
        counts = np.zeros(categories, dtype=np.int64)
        for item in getattr(self, role):
            counts[item.category] += 1
        return counts


def default_sub_categories(categories):
    return tuple(range(min(DEFAULT_SUB_CATEGORIES, categories - 1)))


def check_sub_categories(sub_categories, categories):
    chosen = tuple(int(c) for c in sub_categories)
    if not chosen:
        raise ConfigError("sub_categories must not be empty")
    if len(set(chosen)) != len(chosen):
        raise ConfigError(f"sub_categories has duplicates: {list(chosen)}")
    outside = [c for c in chosen if not 0 <= c < categories]
    if outside:
        raise ConfigError(f"sub_categories {outside} lie outside [0, {categories})")
    if len(chosen) >= categories:
        raise ConfigError(
            f"sub_categories must be a strict subset of the {categories} categories"
        )
    return tuple(sorted(chosen))


def make_splits(dataset, protocol, rng, sub_categories=None, probe_fraction=0.8, source_domain=1):
    """Split ``dataset`` for adapting from ``source_domain`` to the other domain."""
    if protocol not in PROTOCOLS:
        raise ConfigError(f"protocol must be one of {', '.join(PROTOCOLS)}, got {protocol!r}")
    if source_domain not in (1, 2):
        raise ConfigError(f"source domain must be 1 or 2, got {source_domain!r}")
    if not 0 < probe_fraction < 1:
        raise ConfigError(f"probe_fraction must lie in (0, 1), got {probe_fraction}")

    if protocol == "sub-target":
        chosen = check_sub_categories(
            default_sub_categories(dataset.categories) if sub_categories is None else sub_categories,
            dataset.categories,
        )
    elif sub_categories:
        raise ConfigError("sub_categories only apply to the sub-target protocol")
    else:
        chosen = ()

    source = dataset.domain(source_domain)
    target = dataset.domain(3 - source_domain)

    order = rng.permutation(len(source))
    cut = int(round(probe_fraction * len(source)))
    train_idx, test_idx = np.sort(order[:cut]), np.sort(order[cut:])

    if chosen:
        wanted = set(chosen)
        adapt = [item for item in target if item.category in wanted]
    else:
        adapt = list(target)

    return DatasetSplit(
        source_train=[source[i] for i in train_idx],
        source_test=[source[i] for i in test_idx],
        target_adapt=adapt,
        target_test=list(target),
        protocol=protocol,
        source_domain=source_domain,
        sub_categories=chosen,
    )
