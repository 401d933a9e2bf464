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

import logging
from dataclasses import dataclass

import numpy as np

from fairmislead.constants import (
    DEFAULT_THRESHOLD,
    DISTURBANCE_KINDS,
    DISTURBANCE_LADDER,
    DISTURBANCE_LADDER_VERSION,
    MAX_INTENSITY,
)
from fairmislead.errors import ConfigError
from fairmislead.lib.imaging import affine, gaussian_blur, grayscale, jpeg_roundtrip
from fairmislead.lib.utils import derive_rng
from fairmislead.metrics.metrics import subgroup_report
from fairmislead.trainer.trainer import run_inference

logger = logging.getLogger("fairmislead")


class BadDisturbance(ConfigError):
    pass


class BadIntensity(ConfigError):
    pass


@dataclass(frozen=True)
class Disturbance:
    kind: str
    intensity: int = 0

    def __post_init__(self):
        if self.kind not in DISTURBANCE_KINDS:
            raise BadDisturbance(
                "disturbance kind must be one of {}, got {!r}".format(
                    ", ".join(DISTURBANCE_KINDS), self.kind
                )
            )
        if not isinstance(self.intensity, (int, np.integer)) or not (
            0 <= self.intensity <= MAX_INTENSITY
        ):
            raise BadIntensity(
                "intensity must be an integer in 0..{}, got {!r}".format(
                    MAX_INTENSITY, self.intensity
                )
            )

    def __str__(self):
        return "{}:{}".format(self.kind, self.intensity)

    @property
    def is_identity(self):
        return self.intensity == 0

    @property
    def level(self):
        """
        Ladder value of this intensity
        """
        return DISTURBANCE_LADDER[self.kind][self.intensity - 1]

    @classmethod
    def parse(cls, text):
        """
        >>> Disturbance.parse("GB:3")
        Disturbance(kind='GB', intensity=3)
        """
        try:
            kind, intensity = str(text).split(":")
            intensity = int(intensity)
        except ValueError:
            raise BadDisturbance(
                "disturbance must look like <kind>:<intensity>, got {!r}".format(text)
            )
        return cls(kind.strip().upper(), intensity)


def _gaussian_noise(image, sigma, rng):
    return image + rng.normal(0.0, sigma, size=image.shape)


def _block_wise_noise(image, blocks, rng):
    out = image.copy()
    height, width = image.shape[:2]
    side = max(1, min(height, width) // 8)
    for _ in range(blocks):
        top = int(rng.integers(0, height - side + 1))
        left = int(rng.integers(0, width - side + 1))
        out[top : top + side, left : left + side] = rng.random((side, side, image.shape[2]))
    return out


def _pixelate(image, side):
    out = np.empty_like(image)
    height, width = image.shape[:2]
    for top in range(0, height, side):
        for left in range(0, width, side):
            block = image[top : top + side, left : left + side]
            out[top : top + side, left : left + side] = block.mean(axis=(0, 1))
    return out


def _contrast(image, scale):
    mean = grayscale(image).mean()
    return (image - mean) * scale + mean


def _saturation(image, scale):
    gray = grayscale(image)[..., None]
    return gray + scale * (image - gray)


def _affine(image, bounds, rng):
    max_degrees, max_shift = bounds
    degrees = rng.uniform(-max_degrees, max_degrees)
    shift = rng.uniform(-max_shift, max_shift, size=2) * np.array(image.shape[:2])
    return affine(image, degrees, shift)


def apply_disturbance(image, d, seed=0):
    """
    Applies one disturbance to an image
    :param image: H x W x 3 array in [0, 1]
    :param d: disturbance kind and intensity; intensity 0 returns an
    exact copy
    :type d: Disturbance
    :param seed: seed of the random parts (GN, BWN, AT)
    :return: disturbed image in [0, 1], same dtype
    :rtype: np.ndarray
    """
    if not isinstance(d, Disturbance):
        d = Disturbance.parse(d)
    image = np.asarray(image)
    if d.is_identity:
        return image.copy()
    rng = np.random.default_rng(seed)
    work = image.astype(np.float64)
    level = d.level
    if d.kind == "GN":
        out = _gaussian_noise(work, level, rng)
    elif d.kind == "GB":
        out = gaussian_blur(work, level)
    elif d.kind == "BWN":
        out = _block_wise_noise(work, level, rng)
    elif d.kind == "PX":
        out = _pixelate(work, level)
    elif d.kind == "CC":
        out = _contrast(work, level)
    elif d.kind == "CS":
        out = _saturation(work, level)
    elif d.kind == "IC":
        out = jpeg_roundtrip(work, level)
    else:
        out = _affine(work, level, rng)
    return np.clip(out, 0.0, 1.0).astype(image.dtype)


def image_seed(seed, d, position):
    """
    Per-image seed derived from the run seed, the disturbance and the
    image position in the split
    """
    stream = derive_rng(seed, DISTURBANCE_KINDS.index(d.kind), d.intensity, position)
    return int(stream.integers(0, 2 ** 63 - 1))


def disturbance_transform(d, seed=0):
    """
    run_inference transform applying d with per-image seeds
    """

    def transform(image, position, entry):
        return apply_disturbance(image, d, image_seed(seed, d, position))

    return transform


def report_metadata(manifest, split, d, stage):
    return {
        "dataset": manifest.name,
        "split": split if isinstance(split, str) else split.value,
        "perturbation": None if d is None or d.is_identity else str(d),
        "stage": stage,
        "ladder_version": DISTURBANCE_LADDER_VERSION,
    }


def perturbed_predictions(
    ckpt, manifest, split, d, seed=0, batch_size=64, enable_progressbar=False
):
    """
    run_inference on the disturbed images of a split
    """
    transform = None if d is None or d.is_identity else disturbance_transform(d, seed)
    return run_inference(
        ckpt,
        manifest,
        split,
        batch_size=batch_size,
        transform=transform,
        enable_progressbar=enable_progressbar,
    )


def perturbed_eval(
    ckpt,
    manifest,
    split,
    d,
    seed=0,
    threshold=DEFAULT_THRESHOLD,
    group_by="subgroup",
    batch_size=64,
    records=None,
):
    """
    Scores a split through one disturbance and reports on it
    :param d: disturbance, None or intensity 0 for the clean split
    :param records: predictions already computed for (ckpt, split, d)
    :rtype: MetricsReport
    """
    if records is None:
        records = perturbed_predictions(ckpt, manifest, split, d, seed, batch_size)
    report = subgroup_report(
        records,
        threshold=threshold,
        group_by=group_by,
        metadata=report_metadata(manifest, split, d, ckpt.stage),
    )
    logger.info(
        "[EVAL] {} {}: AUC {:.4f}".format(
            manifest.name, d if d is not None else "clean", report.overall["auc"]
        )
    )
    return report
