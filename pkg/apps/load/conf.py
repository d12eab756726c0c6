"""
LoAd Platform - Experiment Configuration

Experiment files are INI text with the sections [dataset], [protocol],
[model], [training] and [run]. Missing keys take the defaults below; every
section is validated by its form in ``forms.SECTION_FORMS``.

The effective configuration renders back to canonical INI (fixed section
and key order), which is echoed into run directories and hashed into the
12-hex-digit ``config_hash``.

Created:    2026
License:    MIT - See LICENSE file
"""

import configparser
import hashlib
import logging
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .arch import LoadConfig
from .data import SynthConfig
from .exceptions import ConfigError
from .forms import SECTION_FORMS
from .nets import TRUNK_PRESETS, TrainingConfig

logger = logging.getLogger(__name__)

CONFIG_FILENAME = "config.ini"


# ============================================================================
# SECTIONS
# ============================================================================

@dataclass(frozen=True)
class DatasetSection:
    source: str = "synth"
    path: str = ""
    mode: str = "translation"
    categories: int = 15
    instances: int = 10
    split: tuple = (6, 4)
    frames: int = 50
    side: int = 64
    seed: int = 0
    identical_domains: bool = False


@dataclass(frozen=True)
class ProtocolSection:
    direction: str = "1->2"
    protocol: str = "whole-target"
    sub_categories: tuple = ()
    probe_fraction: float = 0.8
    score_mode: str = "probability"
    select_generic_by_prediction: bool = False


@dataclass(frozen=True)
class ModelSection:
    preset: str = "load"
    trunk: str = "desk"
    pool_side: int = 3
    fc_widths: tuple = (256, 256)
    fusion: str = "mul"
    dropout: float = 0.6
    train_trunk: bool = False


@dataclass(frozen=True)
class TrainingSection:
    # Batch size and learning rates are sized for the desk trunk and the
    # synthetic dataset. Large-scale runs on the alexnet trunk use
    # batch_size = 256 and 5e-4 for every stage.
    pretrain_epochs: int = 10
    domain_epochs: int = 30
    load_epochs: int = 50
    batch_size: int = 64
    pretrain_lr: float = 1e-2
    domain_lr: float = 1e-2
    load_lr: float = 5e-3
    weight_decay: float = 5e-4
    momentum: float = 0.9
    nesterov: bool = True
    probe_steps: int = 300
    probe_lr: float = 0.5


@dataclass(frozen=True)
class RunSection:
    repeats: int = 5
    seed: int = 0
    seeds: tuple = ()
    ablate_pooling: bool = False


SECTION_TYPES = {
    "dataset": DatasetSection,
    "protocol": ProtocolSection,
    "model": ModelSection,
    "training": TrainingSection,
    "run": RunSection,
}


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: DatasetSection = field(default_factory=DatasetSection)
    protocol: ProtocolSection = field(default_factory=ProtocolSection)
    model: ModelSection = field(default_factory=ModelSection)
    training: TrainingSection = field(default_factory=TrainingSection)
    run: RunSection = field(default_factory=RunSection)

    # ------------------------------------------------------------------
    # Derived views
    # ------------------------------------------------------------------

    def seeds(self):
        if self.run.seeds:
            return tuple(self.run.seeds)
        return tuple(range(self.run.seed, self.run.seed + self.run.repeats))

    def directions(self):
        """Source domains to adapt from: (1,), (2,) or (1, 2)."""
        return {"1->2": (1,), "2->1": (2,), "both": (1, 2)}[self.protocol.direction]

    def synth_config(self):
        ds = self.dataset
        return SynthConfig(
            mode=ds.mode,
            categories=ds.categories,
            instances=ds.instances,
            split=tuple(ds.split),
            frames=ds.frames,
            side=ds.side,
            seed=ds.seed,
            identical_domains=ds.identical_domains,
        )

    def trunk_config(self):
        base = TRUNK_PRESETS[self.model.trunk]
        return base.with_side(self.dataset.side) if self.model.trunk == "desk" else base

    def load_config(self, categories=None):
        fusion = "none" if self.model.preset == "baseline-plain" else self.model.fusion
        return LoadConfig(
            trunk=self.trunk_config(),
            pool_side=self.model.pool_side,
            fc_widths=tuple(self.model.fc_widths),
            categories=categories or self.dataset.categories,
            fusion=fusion,
            dropout=self.model.dropout,
        )

    def training_config(self, stage):
        """TrainingConfig for ``pretrain``, ``domain`` or ``load``."""
        tr = self.training
        return TrainingConfig(
            epochs=getattr(tr, f"{stage}_epochs"),
            batch_size=tr.batch_size,
            lr=getattr(tr, f"{stage}_lr"),
            weight_decay=tr.weight_decay,
            momentum=tr.momentum,
            nesterov=tr.nesterov,
        )

    def with_values(self, section, **values):
        return replace(self, **{section: replace(getattr(self, section), **values)})


# ============================================================================
# PARSING
# ============================================================================

def format_value(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (tuple, list)):
        return ",".join(str(v) for v in value)
    return str(value)


def _section_defaults(section_type):
    return {f.name: format_value(f.default) for f in fields(section_type)}


def parse_config(text, overrides=None, source="<config>"):
    """
    Parse experiment INI text into an ExperimentConfig.

    ``overrides`` maps ``section.key`` to a value and wins over the file.
    Raises ConfigError carrying one message per invalid field.
    """
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from exc

    errors = {}
    for section in parser.sections():
        if section not in SECTION_TYPES:
            errors.setdefault(section, []).append(f"unknown section [{section}]")

    raw = {name: _section_defaults(kind) for name, kind in SECTION_TYPES.items()}
    for section in SECTION_TYPES:
        if not parser.has_section(section):
            continue
        for key, value in parser.items(section):
            if key not in raw[section]:
                errors.setdefault(f"{section}.{key}", []).append("unknown key")
                continue
            raw[section][key] = value.strip()

    for dotted, value in (overrides or {}).items():
        section, _, key = dotted.partition(".")
        if section not in raw or key not in raw[section]:
            errors.setdefault(dotted, []).append("unknown override")
            continue
        raw[section][key] = format_value(value)

    sections = {}
    for name, form_class in SECTION_FORMS.items():
        form = form_class(data=raw[name])
        if not form.is_valid():
            for key, messages in form.errors.items():
                label = name if key == "__all__" else f"{name}.{key}"
                errors.setdefault(label, []).extend(messages)
            continue
        values = {f.name: form.cleaned_data[f.name] for f in fields(SECTION_TYPES[name])}
        sections[name] = SECTION_TYPES[name](**values)

    if errors:
        lines = [f"{key}: {message}" for key, messages in errors.items() for message in messages]
        raise ConfigError(f"{source}: invalid configuration\n  " + "\n  ".join(lines), errors)

    config = ExperimentConfig(**sections)
    _check_cross_section(config, source)
    return config


def _check_cross_section(config, source):
    if config.model.trunk == "alexnet" and config.dataset.side != TRUNK_PRESETS["alexnet"].side:
        raise ConfigError(
            f"{source}: the alexnet trunk needs dataset.side = {TRUNK_PRESETS['alexnet'].side}"
        )
    config.trunk_config().output_shape()
    config.load_config().validate()
    if config.protocol.sub_categories:
        outside = [c for c in config.protocol.sub_categories if c >= config.dataset.categories]
        if outside or len(config.protocol.sub_categories) >= config.dataset.categories:
            raise ConfigError(
                f"{source}: protocol.sub_categories must be a strict subset of "
                f"[0, {config.dataset.categories})"
            )


def load_config(path=None, overrides=None):
    """Read an experiment file (or only defaults when ``path`` is None)."""
    if path is None:
        return parse_config("", overrides, source="<defaults>")
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config: {exc}") from exc
    return parse_config(text, overrides, source=str(path))


def dump_config(config):
    """Canonical INI text: fixed section order, every key, normalised values."""
    blocks = []
    for name in SECTION_TYPES:
        section = getattr(config, name)
        lines = [f"[{name}]"]
        lines.extend(f"{f.name} = {format_value(getattr(section, f.name))}" for f in fields(section))
        blocks.append("\n".join(lines))
    return "\n\n".join(blocks) + "\n"


def config_hash(config):
    return hashlib.sha256(dump_config(config).encode("utf-8")).hexdigest()[:12]
