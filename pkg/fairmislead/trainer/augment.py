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

from dataclasses import dataclass

import numpy as np

from fairmislead.errors import ConfigError
from fairmislead.lib.imaging import gaussian_blur, jpeg_roundtrip, rotate


class BadAugmentConfig(ConfigError):
    pass


@dataclass(frozen=True)
class AugmentConfig:
    """
    Training-time augmentation. Flip fires with probability 0.5, each of
    the other operations independently with probability p.
    """

    enabled: bool = True
    p: float = 0.5
    max_rotation: float = 10.0
    max_blur_sigma: float = 1.0
    jitter: float = 0.1
    min_jpeg_quality: int = 60

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise BadAugmentConfig("augment.p must be in [0, 1], got {}".format(self.p))
        if not 1 <= self.min_jpeg_quality <= 100:
            raise BadAugmentConfig(
                "augment.min_jpeg_quality must be in 1..100, got {}".format(
                    self.min_jpeg_quality
                )
            )
        if self.max_rotation < 0 or self.max_blur_sigma < 0 or self.jitter < 0:
            raise BadAugmentConfig("augment ranges must be non-negative")


def augment_image(image, rng, cfg=AugmentConfig()):
    """
    :param image: H x W x 3 array in [0, 1]
    :param rng: numpy Generator, the only source of randomness
    :return: augmented copy, clipped to [0, 1]
    :rtype: np.ndarray
    """
    if not cfg.enabled:
        return image
    dtype = image.dtype
    out = np.asarray(image, dtype=np.float64)
    # every draw is taken whether or not its operation fires, so the
    # stream position does not depend on earlier outcomes
    flip, fires = rng.random(), rng.random(5)
    angle = rng.uniform(-cfg.max_rotation, cfg.max_rotation)
    sigma = cfg.max_blur_sigma * (1.0 - rng.random())
    brightness, contrast = rng.uniform(-cfg.jitter, cfg.jitter, size=2)
    quality = int(rng.integers(cfg.min_jpeg_quality, 101))

    if flip < 0.5:
        out = out[:, ::-1]
    if fires[0] < cfg.p:
        out = rotate(out, angle)
    if fires[1] < cfg.p:
        out = gaussian_blur(out, sigma)
    if fires[2] < cfg.p:
        out = out * (1.0 + brightness)
    if fires[3] < cfg.p:
        mean = out.mean()
        out = (out - mean) * (1.0 + contrast) + mean
    out = np.clip(out, 0.0, 1.0)
    if fires[4] < cfg.p:
        out = jpeg_roundtrip(out, quality)
    return np.ascontiguousarray(np.clip(out, 0.0, 1.0)).astype(dtype)
