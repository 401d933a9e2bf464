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

import csv
import dataclasses
import logging
from collections import OrderedDict

import numpy as np

from fairmislead.constants import DEFAULT_THRESHOLD, SWEEP_CSV_HEADER
from fairmislead.errors import ConfigError
from fairmislead.perturb.perturb import perturbed_eval
from fairmislead.synth.synthgen import SynthConfig
from fairmislead.trainer.augment import AugmentConfig
from fairmislead.trainer.model import AblationFlags, TrainConfig
from fairmislead.trainer.trainer import train_pipeline

logger = logging.getLogger("fairmislead")


class UnknownVariant(ConfigError):
    pass


def _ablate(cfg, **flags):
    return dataclasses.replace(cfg, ablation=dataclasses.replace(cfg.ablation, **flags))


def _baseline(cfg):
    # pretrain only, for the epochs of both stages
    return dataclasses.replace(
        cfg, epochs_pretrain=cfg.epochs_pretrain + cfg.epochs_misleading, epochs_misleading=0
    )


VARIANTS = OrderedDict(
    (
        ("baseline", _baseline),
        ("full", lambda cfg: _ablate(cfg, **dataclasses.asdict(AblationFlags()))),
        ("no-bias", lambda cfg: _ablate(cfg, use_bias_sampling=False)),
        ("no-contrastive", lambda cfg: _ablate(cfg, use_contrastive=False)),
        ("no-scam", lambda cfg: _ablate(cfg, use_scam=False)),
        ("pre-none", lambda cfg: dataclasses.replace(cfg, preprocess="none")),
        ("pre-dct", lambda cfg: dataclasses.replace(cfg, preprocess="dct")),
        ("pre-srm", lambda cfg: dataclasses.replace(cfg, preprocess="srm_fixed")),
    )
)

SUMMARY_METRICS = ("auc", "f_fpr", "f_mag_auc", "f_mag_acc", "f_meo")


def skewed_synth_config(**overrides):
    """
    The 80/20 dataset of the fairness experiments. Fakes are three times
    as likely as reals in M-W and three times less likely in F-B, and the
    fingerprint is weak and noisy enough that a detector can lean on the
    subgroup for the ambiguous samples.
    """
    params = dict(
        image_size=64,
        n_per_split={"train": 2800, "val": 400, "test": 800},
        subgroup_proportions={"M-W": 0.8, "F-B": 0.2},
        fake_fraction_by_group={"M-W": 0.75, "F-B": 0.25},
        fingerprint_strength=0.02,
        fingerprint_jitter=1.0,
        noise_std=0.03,
    )
    params.update(overrides)
    return SynthConfig(**params)


def experiment_train_config(**overrides):
    """
    Reduced budget for the multi-seed sweeps on skewed_synth_config
    """
    params = dict(
        batch_size=32,
        epochs_pretrain=3,
        epochs_misleading=5,
        augment=AugmentConfig(enabled=False),
    )
    params.update(overrides)
    return TrainConfig(**params)


def variant_config(cfg, variant):
    """
    :param cfg: base training configuration
    :type cfg: TrainConfig
    :param variant: one of VARIANTS
    :rtype: TrainConfig
    """
    if variant not in VARIANTS:
        raise UnknownVariant(
            "variant must be one of {}, got {!r}".format(", ".join(VARIANTS), variant)
        )
    return VARIANTS[variant](cfg)


def run_variant(
    cfg,
    manifest,
    seeds,
    variant,
    split="test",
    threshold=DEFAULT_THRESHOLD,
    group_by="subgroup",
    enable_progressbar=False,
):
    """
    Trains and evaluates one variant once per seed
    :return: one report per seed, in seed order
    :rtype: list of MetricsReport
    """
    base = variant_config(cfg, variant)
    pretrain_only = variant == "baseline"
    reports = list()
    for seed in seeds:
        seeded = dataclasses.replace(base, seed=int(seed))
        logger.info("[SWEEP] variant {} seed {}".format(variant, seed))
        _, final, _ = train_pipeline(
            seeded, manifest, pretrain_only=pretrain_only, enable_progressbar=enable_progressbar
        )
        report = perturbed_eval(
            final, manifest, split, None, threshold=threshold, group_by=group_by
        )
        report.metadata["variant"] = variant
        report.metadata["seed"] = str(seed)
        reports.append(report)
    return reports


def _value(report, metric):
    if metric == "auc":
        return report.overall["auc"]
    return report.fairness[metric]


def _median(values):
    values = [v for v in values if v is not None]
    return float(np.median(values)) if values else None


def summarize_variants(results):
    """
    Median over seeds of the headline metrics of each variant
    :param results: variant -> list of MetricsReport
    :return: rows ordered like SWEEP_CSV_HEADER
    :rtype: list of tuple
    """
    rows = list()
    for variant, reports in results.items():
        rows.append(
            (variant, len(reports))
            + tuple(_median([_value(r, m) for r in reports]) for m in SUMMARY_METRICS)
        )
    return rows


def write_sweep_csv(rows, path):
    with open(path, "w", newline="", encoding="utf-8") as fp:
        writer = csv.writer(fp, lineterminator="\n")
        writer.writerow(SWEEP_CSV_HEADER)
        for row in rows:
            writer.writerow([row[0], row[1]] + ["" if v is None else repr(v) for v in row[2:]])
    logger.info("[SWEEP] Summary written to {}".format(path))
