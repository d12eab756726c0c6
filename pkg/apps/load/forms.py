"""
LoAd Platform - Experiment Config Forms

One Django form per experiment-file section. The forms turn the raw string
values of an INI section into typed values and report every invalid field:
    - DatasetForm:  [dataset]
    - ProtocolForm: [protocol]
    - ModelSectionForm: [model]
    - TrainingForm: [training]
    - RunForm:      [run]

Created:    2026
License:    MIT - See LICENSE file
"""

from django import forms
from django.core.exceptions import ValidationError

from .arch import FUSION_MODES
from .data import PROTOCOLS
from .data.synth import SYNTH_MODES
from .domainness import SCORE_MODES
from .nets import TRUNK_PRESETS

DIRECTIONS = ("1->2", "2->1", "both")
MODEL_PRESETS = ("load", "baseline-plain")
DATASET_SOURCES = ("synth", "directory")


def _choices(values):
    return [(value, value) for value in values]


class IntegerListField(forms.CharField):
    """Comma-separated integers, e.g. ``0,1,2``; empty means no list."""

    def __init__(self, *args, min_value=None, **kwargs):
        kwargs.setdefault("required", False)
        super().__init__(*args, **kwargs)
        self.min_value = min_value

    def to_python(self, value):
        text = super().to_python(value)
        if not text:
            return ()
        try:
            numbers = tuple(int(part) for part in text.split(",") if part.strip())
        except ValueError:
            raise ValidationError(f"expected comma-separated integers, got {text!r}")
        if self.min_value is not None and any(n < self.min_value for n in numbers):
            raise ValidationError(f"every value must be >= {self.min_value}")
        return numbers


# ============================================================================
# SECTIONS
# ============================================================================

class DatasetForm(forms.Form):
    source = forms.ChoiceField(choices=_choices(DATASET_SOURCES))
    path = forms.CharField(required=False)
    mode = forms.ChoiceField(choices=_choices(SYNTH_MODES))
    categories = forms.IntegerField(min_value=2)
    instances = forms.IntegerField(min_value=2)
    split = IntegerListField(min_value=1)
    frames = forms.IntegerField(min_value=1)
    side = forms.IntegerField(min_value=16)
    seed = forms.IntegerField(min_value=0)
    identical_domains = forms.BooleanField(required=False)

    def clean(self):
        cleaned = super().clean()
        if cleaned.get("source") == "directory" and not cleaned.get("path"):
            self.add_error("path", "a directory dataset needs a path")
        split, instances = cleaned.get("split"), cleaned.get("instances")
        if split is not None and instances is not None:
            if len(split) != 2:
                self.add_error("split", "split needs exactly two instance counts")
            elif sum(split) != instances:
                self.add_error("split", f"split {split[0]},{split[1]} does not sum to {instances} instances")
        return cleaned


class ProtocolForm(forms.Form):
    direction = forms.ChoiceField(choices=_choices(DIRECTIONS))
    protocol = forms.ChoiceField(choices=_choices(PROTOCOLS))
    sub_categories = IntegerListField(min_value=0)
    probe_fraction = forms.FloatField(min_value=0.0, max_value=1.0)
    score_mode = forms.ChoiceField(choices=_choices(SCORE_MODES))
    select_generic_by_prediction = forms.BooleanField(required=False)

    def clean_probe_fraction(self):
        value = self.cleaned_data["probe_fraction"]
        if not 0 < value < 1:
            raise ValidationError("probe_fraction must lie strictly between 0 and 1")
        return value

    def clean(self):
        cleaned = super().clean()
        if cleaned.get("protocol") == "whole-target" and cleaned.get("sub_categories"):
            self.add_error("sub_categories", "sub_categories only apply to the sub-target protocol")
        return cleaned


class ModelSectionForm(forms.Form):
    preset = forms.ChoiceField(choices=_choices(MODEL_PRESETS))
    trunk = forms.ChoiceField(choices=_choices(TRUNK_PRESETS))
    pool_side = forms.IntegerField(min_value=1)
    fc_widths = IntegerListField(min_value=1)
    fusion = forms.ChoiceField(choices=_choices(FUSION_MODES))
    dropout = forms.FloatField(min_value=0.0)
    train_trunk = forms.BooleanField(required=False)

    def clean_fc_widths(self):
        widths = self.cleaned_data["fc_widths"]
        if len(widths) != 2:
            raise ValidationError("fc_widths needs exactly two widths")
        return widths

    def clean_dropout(self):
        rate = self.cleaned_data["dropout"]
        if rate >= 1:
            raise ValidationError("dropout must be below 1")
        return rate


class TrainingForm(forms.Form):
    pretrain_epochs = forms.IntegerField(min_value=0)
    domain_epochs = forms.IntegerField(min_value=1)
    load_epochs = forms.IntegerField(min_value=1)
    batch_size = forms.IntegerField(min_value=1)
    pretrain_lr = forms.FloatField()
    domain_lr = forms.FloatField()
    load_lr = forms.FloatField()
    weight_decay = forms.FloatField(min_value=0.0)
    momentum = forms.FloatField(min_value=0.0)
    nesterov = forms.BooleanField(required=False)
    probe_steps = forms.IntegerField(min_value=1)
    probe_lr = forms.FloatField()

    def clean(self):
        cleaned = super().clean()
        for name in ("pretrain_lr", "domain_lr", "load_lr", "probe_lr"):
            if name in cleaned and cleaned[name] <= 0:
                self.add_error(name, "learning rate must be positive")
        if "momentum" in cleaned and cleaned["momentum"] >= 1:
            self.add_error("momentum", "momentum must be below 1")
        return cleaned


class RunForm(forms.Form):
    repeats = forms.IntegerField(min_value=1)
    seed = forms.IntegerField(min_value=0)
    seeds = IntegerListField(min_value=0)
    ablate_pooling = forms.BooleanField(required=False)

    def clean(self):
        cleaned = super().clean()
        seeds, repeats = cleaned.get("seeds"), cleaned.get("repeats")
        if seeds and repeats is not None and len(seeds) != repeats:
            self.add_error("seeds", f"{len(seeds)} seeds listed for {repeats} repeats")
        return cleaned


SECTION_FORMS = {
    "dataset": DatasetForm,
    "protocol": ProtocolForm,
    "model": ModelSectionForm,
    "training": TrainingForm,
    "run": RunForm,
}
