"""
LoAd Platform - Experiment Protocols

Orchestrates the adaptation protocols on top of the networks:
    - Workbench: dataset, the shared pretrained trunk per source domain and
      the trunk features of every image, computed once
    - run_repeat / run_adaptation / run_experiment: per-repeat pipeline
      (split, discriminator, bundles, classifier, evaluation) over seeds and
      directions, optionally fanned out to forked workers
    - probe_shift / probe_experiment: linear probe on fc7 features
      (source->source vs source->target accuracy)
    - ablate_pooling: the same run under the p6 / p4 / p3 pooling presets
    - write_metrics / read_metrics, write_audit, heatmap_agreement,
      localization_rate

Created:    2026
License:    MIT - See LICENSE file
"""

import copy
import csv
import hashlib
import json
import logging
import multiprocessing
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .arch import (
    LoadClassifier,
    ablation_presets,
    accuracy,
    bundle_activations,
    penultimate_features,
    predict,
    train_load,
)
from .conf import CONFIG_FILENAME, config_hash, dump_config
from .data import ImageSequence, load_image_dir, make_splits, synth_dataset
from .domainness import (
    DomainnessCache,
    center_of_mass,
    compute_bundle,
    fill_cache,
    predicted_generic_label,
)
from .engine import Tensor, linear, softmax_cross_entropy
from .exceptions import ConfigError, DataError, LoadError, ShapeError, StageError
from .nets import (
    OptimizerState,
    Trunk,
    build_discriminator,
    domain_accuracy,
    extract_features,
    pretrain_trunk,
    sgd_step,
    train_discriminator,
)
from .serialization import ModelCheckpoint

logger = logging.getLogger(__name__)

METRICS_COLUMNS = (
    "config_hash",
    "direction",
    "protocol",
    "repeat",
    "seed",
    "source_test_acc",
    "target_acc",
    "seconds",
)
METRICS_FILENAME = "metrics.csv"
AUDIT_FILENAME = "audit.tsv"
PROBE_FILENAME = "probe.csv"
DISCRIMINATOR_FILENAME = "discriminator.ckpt"
CLASSIFIER_FILENAME = "classifier.ckpt"
PROBE_COLUMNS = ("direction", "seed", "source_to_source", "source_to_target", "gap")

# Seed-sequence namespace for proxy pretraining, distinct from repeat seeds
_PRETRAIN_STREAM = 7

PROBE_WEIGHT_DECAY = 1e-4


def direction_label(source_domain):
    return f"{source_domain}->{3 - source_domain}"


# ============================================================================
# RESULTS
# ============================================================================

@dataclass
class RepeatOutcome:
    repeat: int
    seed: int
    source_domain: int
    status: str = "running"
    source_test_acc: float = float("nan")
    target_acc: float = float("nan")
    domain_acc: float = float("nan")
    seconds: float = 0.0
    error: str = ""
    exit_code: int = 0
    disc_hash: str = ""
    audit: list = field(default_factory=list)

    @property
    def completed(self):
        return self.status == "completed"


@dataclass
class MetricsRecord:
    config_hash: str
    direction: str
    protocol: str
    preset: str
    outcomes: list = field(default_factory=list)

    @property
    def completed(self):
        return [o for o in self.outcomes if o.completed]

    @property
    def failed(self):
        return [o for o in self.outcomes if not o.completed]

    @property
    def target_accuracies(self):
        return np.array([o.target_acc for o in self.completed], dtype=np.float64)

    @property
    def mean(self):
        values = self.target_accuracies
        return float(values.mean()) if len(values) else float("nan")

    @property
    def std(self):
        values = self.target_accuracies
        return float(values.std(ddof=0)) if len(values) else float("nan")

    @property
    def source_test_mean(self):
        values = [o.source_test_acc for o in self.completed]
        return float(np.mean(values)) if values else float("nan")

    @property
    def seconds(self):
        """Wall time of the completed repeats, the ones the mean row covers."""
        return float(sum(o.seconds for o in self.completed))

    def summary(self):
        return (
            f"{self.preset} {self.direction} {self.protocol}: target {self.mean:.2f} ± {self.std:.2f} "
            f"(source test {self.source_test_mean:.2f}, {len(self.completed)}/{len(self.outcomes)} repeats)"
        )


@dataclass
class ExperimentResult:
    records: list
    out_dir: Path = None

    @property
    def outcomes(self):
        return [o for record in self.records for o in record.outcomes]

    @property
    def failures(self):
        return [o for o in self.outcomes if not o.completed]

    def direction_average(self):
        """Mean target accuracy across directions (the two-way average)."""
        means = [record.mean for record in self.records]
        return float(np.mean(means)) if means else float("nan")


# ============================================================================
# WORKBENCH
# ============================================================================

def load_dataset(config):
    if config.dataset.source == "directory":
        return load_image_dir(config.dataset.path, side=config.dataset.side)
    return synth_dataset(config.synth_config())


class FeatureRows:
    """Rows of a feature array selected by index, sliceable like an array."""

    def __init__(self, features, rows):
        self.features = features
        self.rows = np.asarray(rows, dtype=np.int64)

    def __len__(self):
        return len(self.rows)

    def __getitem__(self, key):
        return self.features[self.rows[key]]

    def __iter__(self):
        return (self.features[row] for row in self.rows)


class Workbench:
    """
    Dataset plus one proxy-pretrained trunk per source domain, with the
    trunk features of every image computed once and shared by all repeats.
    """

    def __init__(self, config, dataset=None, cache_dir=None):
        self.config = config
        self.dataset = dataset if dataset is not None else load_dataset(config)
        if len(self.dataset) == 0:
            raise DataError("dataset is empty")
        self.cache_dir = Path(cache_dir) if cache_dir else None
        self.row_of = {item.image_id: row for row, item in enumerate(self.dataset.images)}
        self._trunks = {}

    @property
    def categories(self):
        return self.dataset.categories

    def with_config(self, config):
        """Same dataset and trunks under a different downstream config."""
        twin = copy.copy(self)
        twin.config = config
        return twin

    def trunk_key(self, source_domain):
        cfg = self.config
        payload = {
            "origin": self.dataset.origin,
            "dataset": dump_config(cfg).split("\n\n")[0],
            "source_domain": source_domain,
            "trunk": cfg.model.trunk,
            "side": cfg.dataset.side,
            "pretrain": [cfg.training.pretrain_epochs, cfg.training.pretrain_lr,
                         cfg.training.batch_size, cfg.training.weight_decay,
                         cfg.training.momentum, cfg.training.nesterov],
            "seed": cfg.run.seed,
        }
        text = json.dumps(payload, sort_keys=True)
        return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]

    def _pretrained_trunk(self, source_domain):
        cfg = self.config
        key = self.trunk_key(source_domain)
        path = self.cache_dir / "trunks" / f"{key}.ckpt" if self.cache_dir else None
        rng = np.random.default_rng(np.random.SeedSequence([cfg.run.seed, source_domain, _PRETRAIN_STREAM]))
        trunk = Trunk(cfg.trunk_config(), rng)
        if path is not None and path.exists():
            trunk.load_state_dict(ModelCheckpoint.load(path).tensors)
            logger.info("Loaded pretrained trunk %s from cache", key)
            return trunk

        source = self.dataset.domain(source_domain)
        if cfg.training.pretrain_epochs > 0:
            logger.info("Pretraining trunk on %d source images (domain %d)", len(source), source_domain)
            pretrain_trunk(
                trunk,
                ImageSequence(source),
                [item.category for item in source],
                self.categories,
                cfg.training_config("pretrain"),
                rng,
            )
        if path is not None:
            ModelCheckpoint(
                trunk.state_dict(),
                {"kind": "trunk", "key": key, "source_domain": source_domain, "trunk": cfg.model.trunk},
            ).save(path)
        return trunk

    def trunk_features(self, source_domain):
        """(trunk, M×N×u×v features of every dataset image) for a source domain."""
        if source_domain not in self._trunks:
            trunk = self._pretrained_trunk(source_domain)
            started = time.perf_counter()
            features = extract_features(trunk, ImageSequence(self.dataset.images))
            logger.info(
                "Extracted trunk features for %d images in %.1fs",
                len(features), time.perf_counter() - started,
            )
            self._trunks[source_domain] = (trunk, features)
        return self._trunks[source_domain]

    def feature_rows(self, source_domain, items):
        _, features = self.trunk_features(source_domain)
        return FeatureRows(features, [self.row_of[item.image_id] for item in items])


# ============================================================================
# AUDIT
# ============================================================================

class DiscriminatorAudit:
    """
    Batch hook recording every image a discriminator is fed. Categories are
    looked up here, on the auditor's side; training never sees them.
    """

    def __init__(self, items, repeat):
        self.items = items
        self.repeat = repeat
        self.seen = set()

    def __call__(self, epoch, batch):
        self.seen.update(int(i) for i in batch)

    def rows(self):
        return [
            (self.repeat, self.items[i].image_id, self.items[i].domain, self.items[i].category)
            for i in sorted(self.seen)
        ]


def write_audit(rows, path):
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="") as handle:
            writer = csv.writer(handle, delimiter="\t", lineterminator="\n")
            writer.writerow(["repeat", "image_id", "domain", "category"])
            writer.writerows(rows)
    except OSError as exc:
        raise DataError(f"{path}: cannot write audit log: {exc}") from exc
    return path


def read_audit(path):
    path = Path(path)
    try:
        with open(path, encoding="utf-8", newline="") as handle:
            return [
                {"repeat": int(r["repeat"]), "image_id": r["image_id"],
                 "domain": int(r["domain"]), "category": int(r["category"])}
                for r in csv.DictReader(handle, delimiter="\t")
            ]
    except (OSError, KeyError, ValueError) as exc:
        raise DataError(f"{path}: cannot read audit log: {exc}") from exc


# ============================================================================
# ONE REPEAT
# ============================================================================

def generic_labels_for(split, disc, features, items, role, by_prediction):
    """Generic label per item: the other domain, or the predicted other domain on test images."""
    if role == "target" and by_prediction:
        return [predicted_generic_label(disc, maps) for maps in features]
    own = split.source_domain if role == "source" else split.target_domain
    return [3 - own] * len(items)


def repeat_streams(seed, source_domain):
    """(split, discriminator, classifier) seed sequences of one repeat."""
    return np.random.SeedSequence([seed, source_domain]).spawn(3)


def repeat_split(bench, source_domain, split_seq):
    cfg = bench.config
    return make_splits(
        bench.dataset,
        cfg.protocol.protocol,
        np.random.default_rng(split_seq),
        sub_categories=cfg.protocol.sub_categories or None,
        probe_fraction=cfg.protocol.probe_fraction,
        source_domain=source_domain,
    )


def fit_discriminator(bench, split, disc_seq, repeat=0):
    """
    Train a discriminator on source ∪ target-adapt from domain labels only.

    Returns (discriminator, audit, domain accuracy on source-test ∪ target-test).
    """
    source_domain = split.source_domain
    trunk, _ = bench.trunk_features(source_domain)
    init_seq, train_seq = disc_seq.spawn(2)
    fed = split.source + split.target_adapt
    audit = DiscriminatorAudit(fed, repeat)
    disc = build_discriminator(trunk, np.random.default_rng(init_seq))
    train_discriminator(
        disc,
        bench.feature_rows(source_domain, fed),
        [item.domain for item in fed],
        bench.config.training_config("domain"),
        np.random.default_rng(train_seq),
        batch_hook=audit,
    )
    held_out = split.source_test + split.target_test
    score = domain_accuracy(
        disc,
        bench.feature_rows(source_domain, held_out),
        [item.domain for item in held_out],
    )
    logger.info("[repeat %d] domain accuracy %.2f%%", repeat, score)
    return disc, audit, score


def save_discriminator(disc, path, config, source_domain, seed):
    return ModelCheckpoint(disc.state_dict(), {
        "kind": "discriminator",
        "trunk": config.model.trunk,
        "side": config.dataset.side,
        "source_domain": source_domain,
        "seed": seed,
        "config_hash": config_hash(config),
    }).save(path)


def restore_discriminator(config, path):
    """Rebuild a discriminator (trunk included) from a checkpoint file."""
    checkpoint = ModelCheckpoint.load(path)
    trunk_name = checkpoint.metadata.get("trunk")
    if trunk_name and trunk_name != config.model.trunk:
        raise ConfigError(f"{path}: checkpoint uses the {trunk_name} trunk, config asks for {config.model.trunk}")
    rng = np.random.default_rng(0)
    disc = build_discriminator(Trunk(config.trunk_config(), rng), rng)
    disc.load_state_dict(checkpoint.tensors)
    return disc, checkpoint.metadata


def run_repeat(bench, source_domain, repeat, seed, out_dir=None, cache_root=None, disc=None):
    """
    One full pipeline run. A failing stage stops the repeat; the outcome keeps
    whatever was measured before and carries the stage-tagged error.

    A pretrained ``disc`` skips discriminator training.
    """
    cfg = bench.config
    started = time.perf_counter()
    outcome = RepeatOutcome(repeat=repeat, seed=seed, source_domain=source_domain)
    split_seq, disc_seq, load_seq = repeat_streams(seed, source_domain)
    load_cfg = cfg.load_config(bench.categories)
    mode = cfg.protocol.score_mode
    stage = "split"
    try:
        split = repeat_split(bench, source_domain, split_seq)
        stage = "features"
        trunk, _ = bench.trunk_features(source_domain)
        train_rows = bench.feature_rows(source_domain, split.source_train)
        source_test_rows = bench.feature_rows(source_domain, split.source_test)
        target_rows = bench.feature_rows(source_domain, split.target_test)

        cache = None
        if load_cfg.fusion == "none":
            disc = None
        else:
            stage = "discriminator"
            if disc is None:
                disc, audit, outcome.domain_acc = fit_discriminator(bench, split, disc_seq, repeat)
                outcome.audit = audit.rows()
            else:
                held_out = split.source_test + split.target_test
                outcome.domain_acc = domain_accuracy(
                    disc,
                    bench.feature_rows(source_domain, held_out),
                    [item.domain for item in held_out],
                )
            outcome.disc_hash = disc.digest()

            stage = "bundles"
            cache = DomainnessCache(outcome.disc_hash, root=cache_root)
            for items, rows, role in (
                (split.source_train, train_rows, "source"),
                (split.source_test, source_test_rows, "source"),
                (split.target_test, target_rows, "target"),
            ):
                labels = generic_labels_for(split, disc, rows, items, role,
                                            cfg.protocol.select_generic_by_prediction)
                fill_cache(cache, disc, items, rows, labels, mode)

        stage = "classifier"
        load_rng = np.random.default_rng(load_seq)
        model_trunk = trunk.clone() if cfg.model.train_trunk else trunk
        model = LoadClassifier(load_cfg, model_trunk, load_rng)
        train_labels = generic_labels_for(split, disc, train_rows, split.source_train, "source", False)
        train_load(
            model,
            split.source_train,
            train_rows,
            cache,
            train_labels,
            cfg.training_config("load"),
            load_rng,
            train_trunk=cfg.model.train_trunk,
            images=ImageSequence(split.source_train) if cfg.model.train_trunk else None,
        )
        if disc is not None and disc.digest() != outcome.disc_hash:
            raise ShapeError("discriminator weights changed while training the classifier")

        stage = "evaluate"
        eval_features = {
            "source": source_test_rows,
            "target": target_rows,
        }
        if cfg.model.train_trunk:
            eval_features = {
                "source": extract_features(model.trunk, ImageSequence(split.source_test)),
                "target": extract_features(model.trunk, ImageSequence(split.target_test)),
            }
        for role, items, attr in (
            ("source", split.source_test, "source_test_acc"),
            ("target", split.target_test, "target_acc"),
        ):
            labels = generic_labels_for(split, disc, bench.feature_rows(source_domain, items), items, role,
                                        cfg.protocol.select_generic_by_prediction and disc is not None)
            activations = bundle_activations(model, cache, items, labels)
            predicted, _ = predict(model, eval_features[role], activations)
            setattr(outcome, attr, accuracy(predicted, [item.category for item in items]))

        if out_dir is not None:
            out_dir = Path(out_dir)
            if disc is not None:
                save_discriminator(disc, out_dir / DISCRIMINATOR_FILENAME, cfg, source_domain, seed)
            ModelCheckpoint(model.state_dict(), {"kind": "classifier", "fusion": load_cfg.fusion,
                                                 "pool_side": load_cfg.pool_side,
                                                 "fc_widths": list(load_cfg.fc_widths),
                                                 "categories": load_cfg.categories}).save(out_dir / CLASSIFIER_FILENAME)
        outcome.status = "completed"
    except LoadError as exc:
        error = StageError(stage, repeat, exc)
        outcome.status = "failed"
        outcome.error = str(error)
        outcome.exit_code = error.exit_code
        logger.error("%s", error)

    outcome.seconds = time.perf_counter() - started
    if outcome.completed:
        logger.info(
            "[repeat %d] %s source test %.2f%%, target %.2f%% (%.1fs)",
            repeat, direction_label(source_domain), outcome.source_test_acc,
            outcome.target_acc, outcome.seconds,
        )
    return outcome


# ============================================================================
# REPEATS, DIRECTIONS, WORKERS
# ============================================================================

# Set in the parent right before forking so workers inherit the features
_ACTIVE_BENCH = None


def _repeat_job(job):
    return run_repeat(_ACTIVE_BENCH, *job)


def run_jobs(bench, jobs, workers=1):
    """Run (source_domain, repeat, seed, out_dir, cache_root) jobs; results in job order."""
    global _ACTIVE_BENCH
    if workers > 1 and len(jobs) > 1:
        if "fork" not in multiprocessing.get_all_start_methods():
            logger.warning("Forked workers unavailable on this platform, running repeats sequentially")
        else:
            for source_domain in sorted({job[0] for job in jobs}):
                bench.trunk_features(source_domain)
            _ACTIVE_BENCH = bench
            try:
                with multiprocessing.get_context("fork").Pool(min(workers, len(jobs))) as pool:
                    return pool.map(_repeat_job, jobs)
            finally:
                _ACTIVE_BENCH = None
    return [run_repeat(bench, *job) for job in jobs]


def _repeat_dir(out_dir, config, source_domain, repeat):
    if out_dir is None:
        return None
    base = Path(out_dir)
    if len(config.directions()) > 1:
        base = base / f"{source_domain}to{3 - source_domain}"
    return base / str(repeat)


def _bundle_root(repeat_dir, persist_bundles):
    return repeat_dir / "bundles" if persist_bundles and repeat_dir is not None else None


def run_adaptation(config, bench=None, source_domain=None, out_dir=None, workers=1,
                   cache_dir=None, persist_bundles=False):
    """All repeats of one direction; returns their MetricsRecord."""
    bench = bench or Workbench(config, cache_dir=cache_dir)
    source_domain = source_domain or config.directions()[0]
    jobs = []
    for repeat, seed in enumerate(config.seeds()):
        repeat_dir = _repeat_dir(out_dir, config, source_domain, repeat)
        jobs.append((source_domain, repeat, seed, repeat_dir, _bundle_root(repeat_dir, persist_bundles)))
    outcomes = run_jobs(bench, jobs, workers)
    record = MetricsRecord(
        config_hash=config_hash(config),
        direction=direction_label(source_domain),
        protocol=config.protocol.protocol,
        preset=config.model.preset,
        outcomes=outcomes,
    )
    if out_dir is not None:
        for outcome, job in zip(outcomes, jobs):
            single = replace(record, outcomes=[outcome])
            write_metrics([single], Path(job[3]) / METRICS_FILENAME)
    logger.info("%s", record.summary())
    return record


def run_experiment(config, bench=None, out_dir=None, workers=1, cache_dir=None, persist_bundles=False):
    """
    Every configured direction; writes config.ini, metrics.csv and audit.tsv
    into ``out_dir`` when given.
    """
    bench = bench or Workbench(config, cache_dir=cache_dir)
    records = [
        run_adaptation(config, bench, source_domain, out_dir, workers, cache_dir, persist_bundles)
        for source_domain in config.directions()
    ]
    result = ExperimentResult(records=records, out_dir=Path(out_dir) if out_dir else None)
    if out_dir is not None:
        write_run_files(config, result, Path(out_dir))
    if len(records) > 1:
        logger.info("Average over directions: %.2f", result.direction_average())
    return result


def write_run_files(config, result, out_dir):
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / CONFIG_FILENAME).write_text(dump_config(config), encoding="utf-8")
    write_metrics(result.records, out_dir / METRICS_FILENAME)
    write_audit([row for o in result.outcomes for row in o.audit], out_dir / AUDIT_FILENAME)


# ============================================================================
# POOLING ABLATION
# ============================================================================

@dataclass
class AblationResult:
    preset: object
    fc_input_width: int
    result: ExperimentResult

    @property
    def records(self):
        return self.result.records


def ablate_pooling(config, bench=None, out_dir=None, workers=1, cache_dir=None, persist_bundles=False):
    """
    The same experiment (same data, trunk and seeds) under each pooling
    preset. Returns one AblationResult per preset; metrics.csv in
    ``out_dir`` holds every preset's rows.
    """
    bench = bench or Workbench(config, cache_dir=cache_dir)
    side = config.trunk_config().map_side()
    presets = ablation_presets(config.model.fc_widths[0])
    too_large = [p.name for p in presets if p.pool_side > side]
    if too_large:
        raise ConfigError(f"pooling presets {', '.join(too_large)} exceed the trunk's {side}×{side} maps")

    results = []
    for preset in presets:
        variant = config.with_values("model", pool_side=preset.pool_side,
                                     fc_widths=(preset.fc_width, preset.fc_width))
        variant_dir = Path(out_dir) / preset.name if out_dir else None
        logger.info("Pooling preset %s: %d×%d maps, FC width %d", preset.name,
                    preset.pool_side, preset.pool_side, preset.fc_width)
        result = run_experiment(variant, bench.with_config(variant), variant_dir, workers,
                                cache_dir, persist_bundles)
        for record in result.records:
            record.preset = f"{record.preset}:{preset.name}"
        width = variant.load_config(bench.categories).fc_input_width
        results.append(AblationResult(preset, width, result))
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / CONFIG_FILENAME).write_text(dump_config(config), encoding="utf-8")
        write_metrics([r for row in results for r in row.records], out_dir / METRICS_FILENAME)
    return results


# ============================================================================
# SHIFT PROBE
# ============================================================================

@dataclass
class LinearProbe:
    mean: np.ndarray
    scale: np.ndarray
    weight: np.ndarray
    bias: np.ndarray

    def predict(self, features):
        x = (features - self.mean) / self.scale
        return np.argmax(x @ self.weight.T + self.bias, axis=1)


def fit_linear_probe(features, labels, categories, steps, lr, weight_decay=PROBE_WEIGHT_DECAY):
    """Multinomial logistic regression by full-batch gradient descent on standardised features."""
    features = np.asarray(features, dtype=np.float32)
    mean = features.mean(axis=0)
    scale = features.std(axis=0) + np.float32(1e-6)
    x = Tensor((features - mean) / scale)
    params = {
        "probe.weight": Tensor(np.zeros((categories, features.shape[1]), dtype=np.float32), requires_grad=True),
        "probe.bias": Tensor(np.zeros(categories, dtype=np.float32), requires_grad=True),
    }
    state = OptimizerState(lr=lr, weight_decay=weight_decay, momentum=0.0, nesterov=False)
    labels = np.asarray(labels, dtype=np.int64)
    for _ in range(steps):
        for param in params.values():
            param.grad = None
        loss = softmax_cross_entropy(linear(x, params["probe.weight"], params["probe.bias"]), labels)
        loss.backward()
        sgd_step(params, {name: p.grad for name, p in params.items()}, state)
    return LinearProbe(mean, scale, params["probe.weight"].data, params["probe.bias"].data)


@dataclass
class ProbeResult:
    source_to_source: float
    source_to_target: float
    direction: str = "1->2"
    seed: int = 0

    @property
    def gap(self):
        return self.source_to_source - self.source_to_target


def probe_shift(config, bench=None, source_domain=None, seed=None, cache_dir=None):
    """
    Train a plain classifier on source-train, then fit a linear probe on its
    fc7 features; report probe accuracy on source-test (S->S) and on every
    target image (S->T).
    """
    bench = bench or Workbench(config, cache_dir=cache_dir)
    source_domain = source_domain or config.directions()[0]
    seed = config.seeds()[0] if seed is None else seed
    split_seq, _, load_seq = repeat_streams(seed, source_domain)
    split = make_splits(
        bench.dataset, "whole-target", np.random.default_rng(split_seq),
        probe_fraction=config.protocol.probe_fraction, source_domain=source_domain,
    )
    categories = bench.categories
    counts = split.histogram("source_train", categories)
    short = [k for k in range(categories) if counts[k] < categories]
    if short:
        raise DataError(
            f"linear probe needs at least {categories} source-train images per category; "
            f"categories {short} have fewer"
        )

    trunk, _ = bench.trunk_features(source_domain)
    plain = replace(config.load_config(categories), fusion="none")
    rng = np.random.default_rng(load_seq)
    model = LoadClassifier(plain, trunk, rng)
    train_rows = bench.feature_rows(source_domain, split.source_train)
    train_load(model, split.source_train, train_rows, None, [], config.training_config("load"), rng)

    train_y = [item.category for item in split.source_train]
    probe = fit_linear_probe(
        penultimate_features(model, train_rows), train_y, categories,
        config.training.probe_steps, config.training.probe_lr,
    )

    def probe_accuracy(items):
        fc7 = penultimate_features(model, bench.feature_rows(source_domain, items))
        return accuracy(probe.predict(fc7), [item.category for item in items])

    result = ProbeResult(
        source_to_source=probe_accuracy(split.source_test),
        source_to_target=probe_accuracy(split.target_test),
        direction=direction_label(source_domain),
        seed=seed,
    )
    logger.info("Shift probe %s seed %d: S->S %.2f%%, S->T %.2f%%",
                result.direction, seed, result.source_to_source, result.source_to_target)
    return result


def probe_experiment(config, bench=None, out_dir=None, cache_dir=None):
    """Shift probe for every configured direction and seed; writes probe.csv into ``out_dir``."""
    bench = bench or Workbench(config, cache_dir=cache_dir)
    results = [
        probe_shift(config, bench, source_domain, seed)
        for source_domain in config.directions()
        for seed in config.seeds()
    ]
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / CONFIG_FILENAME).write_text(dump_config(config), encoding="utf-8")
        write_probe_results(results, out_dir / PROBE_FILENAME)
    return results


def summarize_probe(results):
    """Mean S->S, S->T and gap per direction."""
    summary = {}
    for direction in dict.fromkeys(r.direction for r in results):
        group = [r for r in results if r.direction == direction]
        summary[direction] = (
            float(np.mean([r.source_to_source for r in group])),
            float(np.mean([r.source_to_target for r in group])),
            float(np.mean([r.gap for r in group])),
        )
    return summary


def write_probe_results(results, path):
    path = Path(path)
    try:
        with open(path, "w", encoding="utf-8", newline="") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(PROBE_COLUMNS)
            for r in results:
                writer.writerow([r.direction, r.seed, f"{r.source_to_source:.4f}",
                                 f"{r.source_to_target:.4f}", f"{r.gap:.4f}"])
    except OSError as exc:
        raise DataError(f"{path}: cannot write probe results: {exc}") from exc
    return path


# ============================================================================
# MAP STATISTICS
# ============================================================================

def pearson(a, b):
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    a, b = a - a.mean(), b - b.mean()
    denom = np.sqrt((a * a).sum() * (b * b).sum())
    return float((a * b).sum() / denom) if denom > 0 else float("nan")


def heatmap_agreement(disc_a, disc_b, features, labels, mode="probability"):
    """
    Median Pearson r between the two discriminators' heatmaps of the same
    images; images where either map is constant are skipped.
    """
    scores = []
    for maps, label in zip(features, labels):
        first = compute_bundle(disc_a, None, label, mode, features=maps).heatmap
        second = compute_bundle(disc_b, None, label, mode, features=maps).heatmap
        scores.append(pearson(first, second))
    scores = np.array(scores)
    scores = scores[~np.isnan(scores)]
    return float(np.median(scores)) if len(scores) else float("nan")


def localization_rate(disc, items, features, mode="probability"):
    """Percent of images whose generic heatmap's center of mass lies in the object box."""
    inside = 0
    counted = 0
    for item, maps in zip(items, features):
        if item.box is None:
            continue
        counted += 1
        bundle = compute_bundle(disc, None, 3 - item.domain, mode, features=maps)
        center = center_of_mass(bundle.heatmap, item.side, item.side)
        if center is None:
            continue
        x0, y0, x1, y1 = item.box
        if x0 <= center[0] < x1 and y0 <= center[1] < y1:
            inside += 1
    return 100.0 * inside / counted if counted else 0.0


# ============================================================================
# METRICS CSV
# ============================================================================

def _metric_rows(record):
    rows = []
    for outcome in record.completed:
        rows.append([
            record.config_hash, record.direction, record.protocol, outcome.repeat, outcome.seed,
            f"{outcome.source_test_acc:.4f}", f"{outcome.target_acc:.4f}", f"{outcome.seconds:.3f}",
        ])
    if record.completed:
        rows.append([
            record.config_hash, record.direction, record.protocol, "mean", "",
            f"{record.source_test_mean:.4f}", f"{record.mean:.4f}", f"{record.seconds:.3f}",
        ])
    return rows


def write_metrics(records, path):
    """
    Header, one row per completed repeat and a ``mean`` row per record; when
    one config covers both directions an ``average`` row follows.
    """
    path = Path(path)
    rows = []
    groups = {}
    for record in records:
        rows.extend(_metric_rows(record))
        if record.completed:
            groups.setdefault((record.config_hash, record.protocol), []).append(record)
    for (digest, protocol), group in groups.items():
        if len({r.direction for r in group}) > 1:
            rows.append([
                digest, "average", protocol, "mean", "",
                f"{np.mean([r.source_test_mean for r in group]):.4f}",
                f"{np.mean([r.mean for r in group]):.4f}",
                f"{sum(r.seconds for r in group):.3f}",
            ])
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(METRICS_COLUMNS)
            writer.writerows(rows)
    except OSError as exc:
        raise DataError(f"{path}: cannot write metrics: {exc}") from exc
    return path


def read_metrics(path):
    """Rows of a metrics CSV with accuracies and seconds as floats."""
    path = Path(path)
    try:
        with open(path, encoding="utf-8", newline="") as handle:
            rows = list(csv.DictReader(handle))
    except OSError as exc:
        raise DataError(f"{path}: cannot read metrics: {exc}") from exc
    for row in rows:
        for column in ("source_test_acc", "target_acc", "seconds"):
            row[column] = float(row[column])
    return rows
