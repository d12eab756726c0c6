"""
LoAd Platform - Classifier Architecture Tests
"""

from types import SimpleNamespace

import numpy as np
from django.test import SimpleTestCase
from numpy.testing import assert_allclose, assert_array_equal

from ..arch import (
    LoadClassifier,
    LoadConfig,
    ablation_presets,
    accuracy,
    build_load,
    load_forward,
    penultimate_features,
    predict,
    train_load,
)
from ..domainness import DomainnessCache, compute_bundle, fill_cache
from ..engine import softmax, softmax_cross_entropy
from ..exceptions import ConfigError, DataError, ShapeError
from ..nets import (
    DESK_TRUNK,
    LayerSpec,
    TrainingConfig,
    Trunk,
    TrunkConfig,
    build_discriminator,
    extract_features,
)
from .helpers import MICRO_TRUNK, rng


def micro_config(**changes):
    values = dict(trunk=MICRO_TRUNK, pool_side=2, fc_widths=(8, 6), categories=3,
                  fusion="mul", dropout=0.0)
    values.update(changes)
    return LoadConfig(**values)


class ConfigTests(SimpleTestCase):
    def test_fc_input_widths_for_the_pooling_presets(self):
        widths = {side: LoadConfig(trunk=DESK_TRUNK, pool_side=side).fc_input_width for side in (6, 4, 3)}
        self.assertEqual(widths, {6: 2304, 4: 1024, 3: 576})
        self.assertEqual(LoadConfig(trunk=DESK_TRUNK, pool_side=3, fusion="none").fc_input_width, 288)

    def test_ablation_presets_double_the_widest(self):
        presets = ablation_presets(256)
        self.assertEqual([(p.name, p.pool_side, p.fc_width) for p in presets],
                         [("p6", 6, 512), ("p4", 4, 256), ("p3", 3, 256)])

    def test_validation_collects_every_problem(self):
        config = LoadConfig(trunk=DESK_TRUNK, pool_side=14, categories=1, fusion="add", dropout=1.0)
        with self.assertRaises(ConfigError) as ctx:
            config.validate()
        message = str(ctx.exception)
        for fragment in ("K >= 2", "fusion", "dropout", "pooled side 14"):
            self.assertIn(fragment, message)

    def test_pool_side_may_equal_the_map_side(self):
        LoadConfig(trunk=DESK_TRUNK, pool_side=13).validate()

    def test_trunk_must_match_config(self):
        with self.assertRaises(ShapeError):
            LoadClassifier(micro_config(), Trunk(DESK_TRUNK.with_side(32), rng()), rng())


class ForwardTests(SimpleTestCase):
    def setUp(self):
        gen = rng(1)
        self.trunk = Trunk(MICRO_TRUNK, gen)
        self.maps = extract_features(self.trunk, gen.random((3, 3, 8, 8)))
        self.activations = gen.random(self.maps.shape).astype(np.float32)

    def model(self, **changes):
        return build_load(micro_config(**changes), self.trunk, rng(2))

    def test_logit_shape(self):
        self.assertEqual(self.model().forward(self.maps, self.activations).shape, (3, 3))

    def test_fusion_none_ignores_activations(self):
        model = self.model(fusion="none")
        assert_array_equal(model.forward(self.maps).data, model.forward(self.maps, self.activations).data)
        self.assertEqual(model.fuse(self.maps, None).shape, (3, 4 * 2 * 2))

    def test_fusion_needs_activations(self):
        with self.assertRaises(ShapeError):
            self.model().forward(self.maps)

    def test_activation_shape_must_match(self):
        with self.assertRaises(ShapeError):
            self.model().forward(self.maps, self.activations[:, :2])

    def test_fused_branch_halves(self):
        zeros = np.zeros_like(self.activations)
        fused = self.model().fuse(self.maps, zeros).data
        assert_array_equal(fused[:, 16:], 0)
        plus_one = self.model(fusion="mul-plus-one").fuse(self.maps, zeros).data
        assert_allclose(plus_one[:, :16], plus_one[:, 16:])

    def test_unit_activations_reduce_to_the_baseline(self):
        plain = self.model(fusion="none")
        fused = build_load(micro_config(), self.trunk, rng(9))
        for model in (plain, fused):
            for name in model.head_parameters():
                model.params[name].data = model.params[name].data.astype(np.float64)
        for name in ("load.fc1.bias", "load.fc2.weight", "load.fc2.bias", "load.fc3.weight", "load.fc3.bias"):
            fused.params[name].data = plain.params[name].data.copy()
        half = plain.params["load.fc1.weight"].data / 2
        fused.params["load.fc1.weight"].data = np.concatenate([half, half], axis=1)

        maps = self.maps.astype(np.float64)
        ones = np.ones_like(maps)
        features = fused.fuse(maps, ones).data
        assert_array_equal(features[:, :16], features[:, 16:])
        assert_array_equal(features[:, :16], plain.fuse(maps, None).data)
        assert_allclose(fused.forward(maps, ones).data, plain.forward(maps).data, rtol=1e-12, atol=1e-12)

    def test_eval_mode_is_deterministic(self):
        model = self.model(dropout=0.6)
        first = model.forward(self.maps, self.activations).data
        assert_array_equal(first, model.forward(self.maps, self.activations).data)

    def test_no_gradient_reaches_the_discriminator(self):
        gen = rng(3)
        disc = build_discriminator(self.trunk, gen)
        bundles = [compute_bundle(disc, None, 2, features=m) for m in self.maps]
        activations = np.stack([b.activations for b in bundles])
        snapshot = activations.copy()
        model = self.model()
        images = gen.random((3, 3, 8, 8)).astype(np.float32)
        loss = softmax_cross_entropy(model.forward(self.trunk.forward(images), activations), [0, 1, 2])
        loss.backward()
        self.assertIsNone(disc.params["domain.head.weight"].grad)
        self.assertIsNone(disc.params["domain.head.bias"].grad)
        self.assertIsNotNone(model.params["load.fc1.weight"].grad)
        assert_array_equal(activations, snapshot)

    def test_load_forward_checks_bundle_shape(self):
        model = self.model()
        bundle = SimpleNamespace(activations=np.zeros((4, 3, 3), dtype=np.float32))
        with self.assertRaises(ShapeError):
            load_forward(model, rng().random((3, 8, 8)), bundle)
        self.assertEqual(load_forward(self.model(fusion="none"), rng().random((3, 8, 8))).shape, (3,))

    def test_penultimate_width(self):
        self.assertEqual(penultimate_features(self.model(), self.maps, self.activations).shape, (3, 6))


class ShapeChainTests(SimpleTestCase):
    def random_trunk(self, gen):
        side = int(gen.integers(12, 25))
        layers = (
            LayerSpec.conv(int(gen.integers(2, 7)), 3, stride=int(gen.integers(1, 3))),
            LayerSpec.pool(2, 2),
            LayerSpec.conv(int(gen.integers(2, 7)), 3, pad=1),
        )
        return TrunkConfig(in_channels=3, side=side, layers=layers)

    def test_every_pooled_side_reaches_the_logits(self):
        gen = rng(30)
        for _ in range(6):
            trunk_config = self.random_trunk(gen)
            channels, side, _ = trunk_config.output_shape()
            trunk = Trunk(trunk_config, gen)
            image = gen.random((3, trunk_config.side, trunk_config.side))
            bundle = SimpleNamespace(activations=gen.random((channels, side, side)).astype(np.float32))
            for pool_side in range(1, side + 1):
                categories = int(gen.integers(2, 6))
                config = LoadConfig(trunk=trunk_config, pool_side=pool_side, fc_widths=(5, 4),
                                    categories=categories, dropout=0.0)
                model = build_load(config, trunk, gen)
                self.assertEqual(load_forward(model, image, bundle).shape, (categories,), trunk_config)


class PredictTests(SimpleTestCase):
    def test_ties_go_to_the_lowest_index(self):
        model = build_load(micro_config(fusion="none"), Trunk(MICRO_TRUNK, rng()), rng())
        model.params["load.fc3.weight"].data[:] = 0
        labels, scores = predict(model, rng(1).random((5, 4, 4, 4)).astype(np.float32))
        assert_array_equal(labels, np.zeros(5))
        assert_allclose(scores, np.full((5, 3), 1 / 3), rtol=1e-6)

    def test_single_images_match_the_batch(self):
        gen = rng(2)
        trunk = Trunk(MICRO_TRUNK, gen)
        disc = build_discriminator(trunk, gen)
        model = build_load(micro_config(dropout=0.6), trunk, gen)
        images = gen.random((7, 3, 8, 8)).astype(np.float32)
        features = extract_features(trunk, images)
        bundles = [compute_bundle(disc, None, 2, features=maps) for maps in features]
        activations = np.stack([bundle.activations for bundle in bundles])

        labels, scores = predict(model, features, activations)
        for index, (image, bundle) in enumerate(zip(images, bundles)):
            single_labels, single_scores = predict(model, features[index:index + 1], activations[index:index + 1])
            self.assertEqual(single_labels[0], labels[index])
            assert_allclose(single_scores[0], scores[index], rtol=1e-5)
            logits = load_forward(model, image, bundle)
            assert_allclose(softmax(logits[None])[0], scores[index], rtol=1e-5)

    def test_empty_batch(self):
        model = build_load(micro_config(fusion="none"), Trunk(MICRO_TRUNK, rng()), rng())
        labels, scores = predict(model, np.zeros((0, 4, 4, 4), dtype=np.float32))
        self.assertEqual(labels.shape, (0,))
        self.assertEqual(scores.shape, (0, 3))

    def test_accuracy_is_a_percentage(self):
        self.assertEqual(accuracy([0, 1, 2, 2], [0, 1, 1, 2]), 75.0)
        self.assertEqual(accuracy([], []), 0.0)


class TrainingTests(SimpleTestCase):
    def make_source(self, gen, count=30):
        images = gen.random((count, 3, 8, 8)).astype(np.float32) * 0.4
        categories = np.arange(count) % 3
        for k in range(3):
            images[categories == k, k] += 0.6
        items = [SimpleNamespace(image_id=f"d1-c{c:02d}-i00-f{n:03d}", category=int(c))
                 for n, c in enumerate(categories)]
        return items, images

    def test_training_fits_the_head_and_keeps_the_trunk(self):
        gen = rng(4)
        trunk = Trunk(MICRO_TRUNK, gen)
        disc = build_discriminator(trunk, gen)
        items, images = self.make_source(gen)
        features = extract_features(trunk, images)
        cache = DomainnessCache(disc.digest())
        fill_cache(cache, disc, items, features, [2] * len(items))
        model = build_load(micro_config(), trunk, gen)
        trunk_digest, disc_digest = trunk.digest(), disc.digest()

        result = train_load(model, items, features, cache, [2] * len(items),
                            TrainingConfig(epochs=30, batch_size=10, lr=0.05), gen)

        self.assertEqual(len(result.curve), 31)
        self.assertLess(result.curve[-1], result.curve[0])
        self.assertGreater(result.source_accuracy, 80.0)
        self.assertEqual(trunk.digest(), trunk_digest)
        self.assertEqual(disc.digest(), disc_digest)

    def separable_run(self, seed, epochs=20):
        gen = rng(seed)
        trunk = Trunk(MICRO_TRUNK, gen)
        disc = build_discriminator(trunk, gen)
        images = gen.random((40, 3, 8, 8)).astype(np.float32) * 0.2
        categories = np.arange(40) % 2
        images[categories == 0, 0] = 1.0
        images[categories == 1, 1] = 1.0
        items = [SimpleNamespace(image_id=f"d1-c{c:02d}-i00-f{n:03d}", category=int(c))
                 for n, c in enumerate(categories)]
        features = extract_features(trunk, images)
        cache = DomainnessCache(disc.digest())
        fill_cache(cache, disc, items, features, [2] * len(items))
        model = build_load(micro_config(categories=2), trunk, gen)
        result = train_load(model, items, features, cache, [2] * len(items),
                            TrainingConfig(epochs=epochs, batch_size=10, lr=0.05), gen)
        return model, result

    def test_separable_categories_are_fitted_exactly(self):
        _, result = self.separable_run(8)
        self.assertEqual(len(result.curve), 21)
        self.assertEqual(result.source_accuracy, 100.0)

    def test_identical_seeds_give_identical_parameters(self):
        first, first_result = self.separable_run(9, epochs=3)
        second, second_result = self.separable_run(9, epochs=3)
        for name, param in first.params.items():
            assert_array_equal(param.data, second.params[name].data, name)
        self.assertEqual(first_result.curve, second_result.curve)

    def test_missing_bundles_are_a_data_error(self):
        gen = rng(5)
        trunk = Trunk(MICRO_TRUNK, gen)
        items, images = self.make_source(gen, count=6)
        model = build_load(micro_config(), trunk, gen)
        with self.assertRaisesRegex(DataError, "no cached bundle"):
            train_load(model, items, extract_features(trunk, images), DomainnessCache("x"),
                       [2] * 6, TrainingConfig(epochs=1), gen)

    def test_no_items_is_a_data_error(self):
        model = build_load(micro_config(fusion="none"), Trunk(MICRO_TRUNK, rng()), rng())
        with self.assertRaises(DataError):
            train_load(model, [], np.zeros((0, 4, 4, 4)), None, [], TrainingConfig(epochs=1), rng())

    def test_end_to_end_needs_images(self):
        gen = rng(6)
        trunk = Trunk(MICRO_TRUNK, gen)
        items, images = self.make_source(gen, count=6)
        model = build_load(micro_config(fusion="none"), trunk, gen)
        with self.assertRaises(ConfigError):
            train_load(model, items, extract_features(trunk, images), None, [2] * 6,
                       TrainingConfig(epochs=1), gen, train_trunk=True)

    def test_end_to_end_updates_the_trunk(self):
        gen = rng(7)
        trunk = Trunk(MICRO_TRUNK, gen)
        items, images = self.make_source(gen, count=12)
        model = build_load(micro_config(fusion="none"), trunk, gen)
        before = trunk.digest()
        train_load(model, items, extract_features(trunk, images), None, [2] * 12,
                   TrainingConfig(epochs=2, batch_size=4, lr=0.01), gen, train_trunk=True, images=images)
        self.assertNotEqual(trunk.digest(), before)
