"""
Fair deepfake detection by misleading learning (fairmislead)
https://github.com/fairmislead/fairmislead

Copyright (C) 2026 The fairmislead contributors

This program is free software: you can redistribute it and/or modify
it under the terms of the GNU Affero General Public License as published by
the Free Software Foundation, either version 3 of the License, or
(at your option) any later version.

This program is distributed in the hope that it will be useful,
but WITHOUT ANY WARRANTY; without even the implied warranty of
MERCHANTABILITY or FITNESS FOR A PARTICULAR PURPOSE.  See the
GNU Affero General Public License for more details.

You should have received a copy of the GNU Affero General Public License
along with this program.  If not, see <https://www.gnu.org/licenses/>.
"""

import os

import yaml

from fairmislead.constants import DEFAULT_THRESHOLD
from fairmislead.data.manifest import Split
from fairmislead.errors import ConfigError
from fairmislead.synth.synthgen import SynthConfig
from fairmislead.trainer.model import TrainConfig

try:
    from yaml import CSafeLoader as Loader
except ImportError:
    from yaml import SafeLoader as Loader

SECTIONS = ("synth", "train", "paths", "report")

# mappings whose keys are data (subgroups, split names), not config keys
FREE_MAPS = (
    "synth.n_per_split",
    "synth.subgroup_proportions",
    "synth.fake_fraction_by_group",
)

PATHS_DEFAULTS = {
    "manifest": None,
    "out_dir": "synthetic",
    "checkpoint": "checkpoint.zip",
    "training_log": "training_log.csv",
    "reports_dir": "reports",
}

REPORT_DEFAULTS = {
    "threshold": DEFAULT_THRESHOLD,
    "group_by": "subgroup",
    "split": "test",
    "seed": 0,
}


class UnknownConfigKey(ConfigError):
    def __init__(self, key):
        self.key = key
        super().__init__("unknown config key: {}".format(key))


class BadConfigValue(ConfigError):
    pass


def _synth_defaults():
    cfg = SynthConfig()
    return {
        "image_size": cfg.image_size,
        "n_per_split": dict(cfg.n_per_split),
        "subgroup_proportions": {str(k): v for k, v in cfg.subgroup_proportions.items()},
        "fake_fraction": cfg.fake_fraction,
        "fake_fraction_by_group": None,
        "fingerprint_strength": cfg.fingerprint_strength,
        "fingerprint_jitter": cfg.fingerprint_jitter,
        "attribute_signal_strength": cfg.attribute_signal_strength,
        "noise_std": cfg.noise_std,
        "seed": cfg.seed,
    }


def default_tree():
    """
    Every config key with its default, as nested dicts
    """
    return {
        "synth": _synth_defaults(),
        "train": TrainConfig().to_dict(),
        "paths": dict(PATHS_DEFAULTS),
        "report": dict(REPORT_DEFAULTS),
    }


def _flatten(tree, prefix=""):
    for key, value in tree.items():
        dotted = "{}.{}".format(prefix, key) if prefix else key
        if isinstance(value, dict) and dotted not in FREE_MAPS:
            yield from _flatten(value, dotted)
        else:
            yield dotted, value


def _merge(target, source, prefix=""):
    if not isinstance(source, dict):
        raise BadConfigValue("{} must be a mapping".format(prefix or "config"))
    for key, value in source.items():
        dotted = "{}.{}".format(prefix, key) if prefix else str(key)
        if key not in target:
            raise UnknownConfigKey(dotted)
        if isinstance(target[key], dict) and dotted not in FREE_MAPS:
            _merge(target[key], value, dotted)
        else:
            target[key] = value


def parse_override(text):
    """
    "train.lr=0.01" -> ({"train": {"lr": 0.01}}); the value is read as a
    YAML scalar
    """
    if "=" not in text:
        raise BadConfigValue("override must look like key=value, got {!r}".format(text))
    dotted, raw = text.split("=", 1)
    value = yaml.load(raw, Loader=Loader)
    tree = value
    for key in reversed(dotted.strip().split(".")):
        tree = {key: tree}
    return tree


class RunConfig:
    """
    The four sections of a run: dataset synthesis, training, file paths
    and reporting
    """

    def __init__(self, synth=None, train=None, paths=None, report=None):
        self.synth = synth or SynthConfig()
        self.train = train or TrainConfig()
        self.paths = dict(PATHS_DEFAULTS, **(paths or {}))
        self.report = dict(REPORT_DEFAULTS, **(report or {}))

    @staticmethod
    def documented_keys(sections=SECTIONS):
        """
        Dotted key and default of every config key in the given sections
        (or dotted prefixes)
        :rtype: list of (str, object)
        """
        return [
            (key, value)
            for key, value in _flatten(default_tree())
            if any(key == s or key.startswith(s + ".") for s in sections)
        ]


class RunConfigLoader:
    @classmethod
    def from_dict(cls, data, overrides=()):
        """
        :param data: nested mapping, missing keys take their defaults
        :param overrides: "dotted.key=value" strings applied on top
        :rtype: RunConfig
        """
        tree = default_tree()
        _merge(tree, data or {})
        for override in overrides:
            _merge(tree, parse_override(override))
        try:
            synth = SynthConfig(**tree["synth"])
            train = TrainConfig.from_dict(tree["train"])
        except (TypeError, ValueError) as e:
            raise BadConfigValue(str(e))
        report = tree["report"]
        if report["group_by"] not in ("subgroup", "method"):
            raise BadConfigValue(
                "report.group_by must be subgroup or method, got {!r}".format(report["group_by"])
            )
        try:
            Split(report["split"])
            report["threshold"] = float(report["threshold"])
        except (TypeError, ValueError):
            raise BadConfigValue(
                "bad report section: split {!r}, threshold {!r}".format(
                    report["split"], report["threshold"]
                )
            )
        return RunConfig(synth=synth, train=train, paths=tree["paths"], report=report)

    @classmethod
    def from_yaml(cls, path_to_yaml, overrides=()):
        if not os.path.isfile(path_to_yaml):
            raise ConfigError("config file not found: {}".format(path_to_yaml))
        with open(path_to_yaml) as fp:
            try:
                data = yaml.load(fp, Loader=Loader)
            except yaml.YAMLError as e:
                raise BadConfigValue("{} is not valid YAML: {}".format(path_to_yaml, e))
        return cls.from_dict(data, overrides=overrides)

    @classmethod
    def load(cls, path=None, overrides=()):
        """
        Reads path, else $FAIRMISLEAD_CONFIG_YML, else the defaults
        """
        path = path or os.getenv("FAIRMISLEAD_CONFIG_YML")
        if path:
            return cls.from_yaml(path, overrides=overrides)
        return cls.from_dict({}, overrides=overrides)
