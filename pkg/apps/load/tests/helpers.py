"""
Shared fixtures for the LoAd test suite: tiny configurations and the
opt-in decorator for the long statistical checks.
"""

import unittest

import numpy as np
from django.conf import settings
from django.test import tag

from ..conf import parse_config
from ..nets import LayerSpec, TrunkConfig

# 3 categories, 2+2 instances, 4 frames: 24 images per domain at 32×32
TINY_INI = """
[dataset]
categories = 3
instances = 4
split = 2,2
frames = 4
side = 32

[model]
fc_widths = 16,16

[training]
pretrain_epochs = 1
domain_epochs = 3
load_epochs = 3
batch_size = 8
probe_steps = 20

[run]
repeats = 2
"""

# 8×8 input -> 4 maps of 4×4; small enough for finite differences
MICRO_TRUNK = TrunkConfig(
    in_channels=3,
    side=8,
    layers=(
        LayerSpec.conv(3, 3),
        LayerSpec.pool(2, 2),
        LayerSpec.conv(4, 2, pad=1),
    ),
)


def tiny_config(**overrides):
    return parse_config(TINY_INI, overrides, source="<tiny>")


def rng(seed=0):
    return np.random.default_rng(seed)


def slow(test_item):
    """Tag a statistical acceptance check and skip it unless LOAD_RUN_SLOW_TESTS is set."""
    skipped = unittest.skipUnless(
        settings.LOAD_RUN_SLOW_TESTS, "set LOAD_RUN_SLOW_TESTS=True to run slow checks"
    )(test_item)
    return tag("slow")(skipped)
