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

import io

import numpy as np
from PIL import Image
from scipy import ndimage

# ITU-R BT.601 luma weights
LUMA = np.array([0.299, 0.587, 0.114])


def to_uint8(image):
    return np.clip(np.rint(np.asarray(image) * 255.0), 0, 255).astype(np.uint8)


def jpeg_roundtrip(image, quality):
    """
    Encodes an H x W x 3 image in [0, 1] as JPEG at the given quality
    and decodes it again
    :param image: image array in [0, 1]
    :param quality: JPEG quality, 1..100
    :rtype: np.ndarray
    """
    buffer = io.BytesIO()
    Image.fromarray(to_uint8(image), mode="RGB").save(
        buffer, format="JPEG", quality=int(quality)
    )
    buffer.seek(0)
    with Image.open(buffer) as img:
        decoded = np.asarray(img.convert("RGB"), dtype=np.float64) / 255.0
    return decoded.astype(np.asarray(image).dtype, copy=False)


def gaussian_blur(image, sigma):
    """
    Spatial Gaussian blur, channels kept apart, kernel truncated at
    radius ceil(2 * sigma)
    """
    if sigma <= 0:
        return np.array(image, copy=True)
    return ndimage.gaussian_filter(
        image, sigma=(sigma, sigma, 0), mode="reflect", truncate=2.0
    )


def rotate(image, degrees):
    return ndimage.rotate(image, degrees, axes=(1, 0), reshape=False, order=1, mode="reflect")


def affine(image, degrees, shift):
    """
    Rotation about the image centre followed by a translation
    :param degrees: rotation angle
    :param shift: (dy, dx) in pixels
    """
    theta = np.deg2rad(degrees)
    cos, sin = np.cos(theta), np.sin(theta)
    matrix = np.array([[cos, -sin], [sin, cos]])
    center = (np.array(image.shape[:2]) - 1) / 2.0
    offset = center - matrix @ center - np.asarray(shift, dtype=np.float64)
    channels = [
        ndimage.affine_transform(image[..., c], matrix, offset=offset, order=1, mode="reflect")
        for c in range(image.shape[2])
    ]
    return np.stack(channels, axis=-1)


def grayscale(image):
    return np.asarray(image) @ LUMA
