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

import colorsys
import logging
import math
import os
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np
from scipy import ndimage
from scipy.special import expit

from fairmislead.constants import FINGERPRINT_CROP, FINGERPRINT_PERIOD
from fairmislead.data.manifest import (
    DatasetManifest,
    DemographicKey,
    Label,
    ManifestEntry,
    Method,
    Split,
    save_image,
    write_manifest,
)
from fairmislead.errors import ConfigError, DataError
from fairmislead.lib.utils import check_progressbar, derive_rng, ensure_writable_dir

MANIFEST_FILE = "manifest.csv"

logger = logging.getLogger("fairmislead")


class UnwritableDir(DataError):
    """
    Raised when the output directory cannot be created or written to
    """

    def __init__(self, path):
        self.path = path
        super().__init__("cannot write to directory {}".format(path))


class DegenerateConfig(ConfigError):
    """
    Raised when the synthetic dataset cannot support fairness
    measurements (fewer than two populated subgroups) or a value is
    out of range
    """

    pass


class NegativeStrength(ConfigError):
    """
    Raised when a fingerprint strength is negative
    """

    pass


def _as_key(key):
    return key if isinstance(key, DemographicKey) else DemographicKey.parse(key)


@dataclass
class SynthConfig:
    """
    Parameters of the synthetic face-proxy dataset.
    `fake_fraction_by_group` overrides `fake_fraction` per subgroup, which
    correlates the label with the subgroup (majority-class preference).
    """

    image_size: int = 64
    n_per_split: Dict[str, int] = field(
        default_factory=lambda: {"train": 2800, "val": 400, "test": 800}
    )
    subgroup_proportions: Dict[DemographicKey, float] = field(
        default_factory=lambda: {"M-W": 0.8, "F-B": 0.2}
    )
    fake_fraction: float = 0.5
    fake_fraction_by_group: Optional[Dict[DemographicKey, float]] = None
    fingerprint_strength: float = 0.15
    # per-fake amplitude factor drawn from U[1 - jitter, 1 + jitter]
    fingerprint_jitter: float = 0.0
    attribute_signal_strength: float = 0.5
    # std of the additive sensor noise on every image
    noise_std: float = 0.0
    seed: int = 0

    def __post_init__(self):
        self.subgroup_proportions = OrderedDict(
            sorted(
                ((_as_key(k), float(v)) for k, v in self.subgroup_proportions.items()),
                key=lambda kv: kv[0].index,
            )
        )
        if self.fake_fraction_by_group is not None:
            self.fake_fraction_by_group = {
                _as_key(k): float(v) for k, v in self.fake_fraction_by_group.items()
            }
        self.n_per_split = {Split(k).value: int(v) for k, v in self.n_per_split.items()}
        self.validate()

    def validate(self):
        if self.image_size < 8:
            raise DegenerateConfig("image_size must be at least 8")
        if any(v < 0 for v in self.n_per_split.values()):
            raise DegenerateConfig("n_per_split values must be non-negative")
        if any(v < 0 for v in self.subgroup_proportions.values()):
            raise DegenerateConfig("subgroup proportions must be non-negative")
        total = math.fsum(self.subgroup_proportions.values())
        if abs(total - 1.0) > 1e-9:
            raise DegenerateConfig(
                "subgroup proportions sum to {}, expected 1".format(total)
            )
        if sum(1 for v in self.subgroup_proportions.values() if v > 0) < 2:
            raise DegenerateConfig(
                "at least two subgroups need a positive proportion "
                "for fairness metrics to be defined"
            )
        fractions = [self.fake_fraction]
        if self.fake_fraction_by_group:
            fractions.extend(self.fake_fraction_by_group.values())
        if any(not 0.0 <= f < 1.0 for f in fractions):
            raise DegenerateConfig("fake fractions must lie in [0, 1)")
        if self.fingerprint_strength < 0:
            raise NegativeStrength("fingerprint_strength must be >= 0")
        if not 0.0 <= self.fingerprint_jitter <= 1.0:
            raise DegenerateConfig("fingerprint_jitter must lie in [0, 1]")
        if self.noise_std < 0:
            raise DegenerateConfig("noise_std must be >= 0")
        if self.attribute_signal_strength < 0:
            raise DegenerateConfig("attribute_signal_strength must be >= 0")

    def fake_fraction_for(self, key):
        if self.fake_fraction_by_group and key in self.fake_fraction_by_group:
            return self.fake_fraction_by_group[key]
        return self.fake_fraction


def fingerprint_pattern(size, seed):
    """
    The planted artifact before scaling: a product of two sinusoids of
    period FINGERPRINT_PERIOD, nonzero only on the central crop.
    Values lie in [-1, 1].
    """
    rng = derive_rng(seed, 0xF1)
    phase_y, phase_x = rng.uniform(0.0, 2.0 * np.pi, size=2)
    coords = np.arange(size, dtype=np.float64)
    wave_y = np.sin(2.0 * np.pi * coords / FINGERPRINT_PERIOD + phase_y)
    wave_x = np.sin(2.0 * np.pi * coords / FINGERPRINT_PERIOD + phase_x)
    pattern = np.outer(wave_y, wave_x)

    half = int(round(size * FINGERPRINT_CROP / 2.0))
    lo, hi = size // 2 - half, size // 2 + half
    mask = np.zeros((size, size))
    mask[lo:hi, lo:hi] = 1.0
    return pattern * mask


def plant_fingerprint(image, strength, seed):
    """
    Adds the fixed-frequency generator artifact to an image
    :param image: H x W x 3 array in [0, 1], H == W
    :param strength: amplitude of the artifact
    :param seed: phase seed; same seed gives the same pattern
    :return: fingerprinted image clipped to [0, 1]
    """
    if strength < 0:
        raise NegativeStrength("strength must be >= 0, got {}".format(strength))
    image = np.asarray(image)
    if strength == 0:
        return image.copy()
    height, width = image.shape[:2]
    pattern = fingerprint_pattern(max(height, width), seed)[:height, :width]
    out = image + strength * pattern[:, :, None]
    return np.clip(out, 0.0, 1.0).astype(image.dtype)


def _value_noise(rng, size, grid):
    """Perlin-style smooth texture: a random coarse grid upsampled with cubic splines"""
    coarse = rng.uniform(-1.0, 1.0, size=(grid, grid))
    fine = ndimage.zoom(coarse, size / grid, order=3, mode="reflect")
    return fine[:size, :size]


def subgroup_color(key, attribute_signal_strength):
    """
    Skin-tone proxy of a subgroup: a hue rotation proportional to the
    attribute signal strength, darker for the B race bucket
    """
    hue = (0.06 + attribute_signal_strength * key.index / 8.0) % 1.0
    value = 0.78 - attribute_signal_strength * 0.08 * "ABWO".index(key.race.value)
    saturation = 0.45 if key.gender.value == "M" else 0.35
    return np.array(colorsys.hsv_to_rgb(hue, saturation, value))


def render_face(key, cfg, rng):
    """
    Renders one face proxy: an elliptical smooth-edged blob over a gray
    background, tinted with the subgroup color and textured with a
    subgroup texture plus a per-image identity texture
    """
    size = cfg.image_size
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    cy = size / 2.0 + rng.uniform(-0.05, 0.05) * size
    cx = size / 2.0 + rng.uniform(-0.05, 0.05) * size
    ry = size * rng.uniform(0.36, 0.44)
    rx = size * rng.uniform(0.28, 0.36)
    radius = np.sqrt(((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2)
    # soft edge, about two pixels wide
    face_mask = expit((1.0 - radius) * min(ry, rx) / 1.5)

    group_texture = _value_noise(derive_rng(cfg.seed, 0x7E, key.index), size, 6)
    identity_texture = _value_noise(rng, size, 5)
    shading = 1.0 - 0.25 * ((xx - cx) / size) - 0.15 * ((yy - cy) / size)
    texture = (
        0.06 * cfg.attribute_signal_strength * group_texture + 0.05 * identity_texture
    )

    color = subgroup_color(key, cfg.attribute_signal_strength)
    face = color[None, None, :] * shading[:, :, None] + texture[:, :, None]
    background = rng.uniform(0.25, 0.6) + 0.05 * _value_noise(rng, size, 3)
    image = face_mask[:, :, None] * face + (1.0 - face_mask[:, :, None]) * background[
        :, :, None
    ]
    brightness = rng.uniform(-0.05, 0.05)
    return np.clip(image + brightness, 0.0, 1.0)


def generate_dataset(cfg, out_dir, enable_progressbar=False):
    """
    Writes the synthetic images and manifest.csv into out_dir.
    Each image draws from its own counter-derived RNG stream, so the
    output does not depend on generation order.
    :param cfg: dataset parameters
    :type cfg: SynthConfig
    :param out_dir: output directory
    :type out_dir: str
    :return: the manifest of the written dataset
    :rtype: DatasetManifest
    """
    cfg.validate()
    if not ensure_writable_dir(out_dir):
        raise UnwritableDir(out_dir)

    keys = list(cfg.subgroup_proportions.keys())
    probabilities = np.array([cfg.subgroup_proportions[k] for k in keys])
    probabilities = probabilities / probabilities.sum()

    entries = list()
    for split_index, split in enumerate(Split):
        n = cfg.n_per_split.get(split.value, 0)
        if not n:
            continue
        split_dir = os.path.join(out_dir, split.value)
        if not ensure_writable_dir(split_dir):
            raise UnwritableDir(split_dir)
        assignment = derive_rng(cfg.seed, split_index).choice(
            len(keys), size=n, p=probabilities
        )
        logger.info("[SYNTH] Rendering {} {} images".format(n, split.value))
        for i in check_progressbar(range(n), enable_progressbar=enable_progressbar):
            key = keys[assignment[i]]
            rng = derive_rng(cfg.seed, split_index, i + 1)
            is_fake = rng.random() < cfg.fake_fraction_for(key)
            image = render_face(key, cfg, rng)
            if is_fake:
                strength = cfg.fingerprint_strength
                if cfg.fingerprint_jitter:
                    jitter = cfg.fingerprint_jitter
                    strength *= rng.uniform(1.0 - jitter, 1.0 + jitter)
                image = plant_fingerprint(image, strength, cfg.seed)
            if cfg.noise_std:
                noise = rng.normal(0.0, cfg.noise_std, size=image.shape)
                image = np.clip(image + noise, 0.0, 1.0)
            sample_id = "{}-{:06d}".format(split.value, i)
            rel_path = "{}/{}.png".format(split.value, sample_id)
            save_image(image, os.path.join(out_dir, rel_path))
            entries.append(
                ManifestEntry(
                    id=sample_id,
                    path=rel_path,
                    label=Label.FAKE if is_fake else Label.REAL,
                    subgroup=key,
                    method=Method.SYNTH if is_fake else None,
                    split=split,
                )
            )

    manifest = DatasetManifest(entries=tuple(entries), root=os.path.abspath(out_dir))
    write_manifest(manifest, os.path.join(out_dir, MANIFEST_FILE))
    logger.info(
        "[SYNTH] Wrote {} images and {} to {}".format(
            len(entries), MANIFEST_FILE, out_dir
        )
    )
    return manifest
