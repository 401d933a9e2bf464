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

import json
import logging
import os

import numpy as np
import torch
import torch.nn.functional as F
from scipy import fft
from torch import nn

from fairmislead.constants import (
    DCT_BLOCK,
    DCT_CUTOFF,
    SRM_DEFAULT_CHANNELS,
    SRM_DEFAULT_LAMBDA,
    SRM_DEFAULT_THRESHOLD,
    SRM_KERNELS,
)
from fairmislead.errors import ConfigError, DataError, NumericalError

logger = logging.getLogger("fairmislead")

PREPROCESS_MODES = ("astray_srm", "srm_fixed", "dct", "none")
KERNEL_SIZE = 5


class BadChannelCount(ConfigError):
    """
    Raised when the kernel bank size is not a positive multiple of 3
    """

    pass


class ImageTooSmall(DataError):
    """
    Raised when an image is smaller than the filter support
    """

    pass


class NonFiniteGradient(NumericalError):
    """
    Raised when a kernel update is requested with a NaN/Inf gradient
    """

    pass


class BadPreprocessMode(ConfigError):
    pass


def srm_base_taps():
    """
    Integer taps and normalisers of the 3 canonical 5x5 SRM kernels
    :rtype: (np.ndarray [3, 5, 5], np.ndarray [3])
    """
    taps = np.stack([np.array(kernel, dtype=np.float64) for kernel, _ in SRM_KERNELS])
    divisors = np.array([divisor for _, divisor in SRM_KERNELS], dtype=np.float64)
    return taps, divisors


def srm_base_kernels():
    """
    The 3 canonical 5x5 SRM kernels divided by their normalisers
    :rtype: np.ndarray, shape [3, 5, 5]
    """
    taps, divisors = srm_base_taps()
    return taps / divisors[:, None, None]


class KernelBank(nn.Module):
    """
    Astray-SRM filter bank. `kernels` is trainable and updated by the plain
    rule kernels <- kernels - lambda * grad; `init_snapshot` keeps the
    initial values and is never written after construction.

    The initial kernels are held as taps / divisors, one divisor per output
    channel (all ones unless given). The forward pass cross-correlates with
    `kernels`, evaluated as taps / divisors plus the drift from the snapshot,
    so the untouched canonical bank gives an exactly zero response on flat
    images.
    """

    def __init__(
        self, kernels, lam=SRM_DEFAULT_LAMBDA, threshold=SRM_DEFAULT_THRESHOLD, divisors=None
    ):
        super().__init__()
        kernels = torch.as_tensor(kernels)
        if kernels.ndim != 4 or kernels.shape[1:] != (3, KERNEL_SIZE, KERNEL_SIZE):
            raise BadChannelCount(
                "kernel bank shape must be [C, 3, 5, 5], got {}".format(
                    tuple(kernels.shape)
                )
            )
        taps = kernels.detach().clone()
        if divisors is None:
            divisors = torch.ones(kernels.shape[0], dtype=kernels.dtype)
        divisors = torch.as_tensor(divisors, dtype=kernels.dtype).reshape(-1, 1, 1, 1)
        if divisors.shape[0] != kernels.shape[0]:
            raise BadChannelCount(
                "{} divisors for {} kernels".format(divisors.shape[0], kernels.shape[0])
            )
        snapshot = taps / divisors
        self.kernels = nn.Parameter(snapshot.clone())
        self.register_buffer("init_snapshot", snapshot)
        self.register_buffer("init_taps", taps)
        self.register_buffer("init_divisors", divisors)
        self.lam = float(lam)
        self.threshold = threshold

    @property
    def c_out(self):
        return self.kernels.shape[0]

    def extra_repr(self):
        return "c_out={}, lambda={}, threshold={}".format(
            self.c_out, self.lam, self.threshold
        )

    def forward(self, x):
        """
        :param x: batch N x 3 x H x W in [0, 1]
        :return: residual maps N x C_out x H x W
        """
        if x.shape[-1] < KERNEL_SIZE or x.shape[-2] < KERNEL_SIZE:
            raise ImageTooSmall(
                "residual filtering needs images of at least 5x5, got {}x{}".format(
                    x.shape[-2], x.shape[-1]
                )
            )
        pad = KERNEL_SIZE // 2
        x = F.pad(x, (pad, pad, pad, pad), mode="reflect")
        canonical = F.conv2d(x, self.init_taps) / self.init_divisors.reshape(1, -1, 1, 1)
        residual = canonical + F.conv2d(x, self.kernels - self.init_snapshot)
        if self.threshold is not None:
            residual = torch.clamp(residual, -self.threshold, self.threshold)
        return residual


def init_kernel_bank(
    c_out=SRM_DEFAULT_CHANNELS,
    lam=SRM_DEFAULT_LAMBDA,
    threshold=SRM_DEFAULT_THRESHOLD,
    dtype=torch.float64,
):
    """
    The 3 canonical SRM kernel types, replicated over the 3 input channels
    and tiled to c_out output channels (type i sits at channels i, i+3, ...)
    :param c_out: number of output channels, a multiple of 3
    :rtype: KernelBank
    """
    if c_out <= 0 or c_out % 3:
        raise BadChannelCount("c_out must be a positive multiple of 3, got {}".format(c_out))
    taps, divisors = srm_base_taps()
    tiled = np.tile(taps, (c_out // 3, 1, 1))
    kernels = np.repeat(tiled[:, None, :, :], 3, axis=1)
    return KernelBank(
        torch.tensor(kernels, dtype=dtype),
        lam=lam,
        threshold=threshold,
        divisors=torch.tensor(np.tile(divisors, c_out // 3), dtype=dtype),
    )


def apply_residual_filter(bank, image):
    """
    Filters one image with the bank
    :param bank: KernelBank
    :param image: H x W x 3 array in [0, 1]
    :return: H x W x C_out residual map
    :rtype: np.ndarray
    """
    image = np.asarray(image)
    if image.shape[0] < KERNEL_SIZE or image.shape[1] < KERNEL_SIZE:
        raise ImageTooSmall(
            "residual filtering needs images of at least 5x5, got {}x{}".format(
                image.shape[0], image.shape[1]
            )
        )
    x = torch.as_tensor(image, dtype=bank.kernels.dtype).permute(2, 0, 1).unsqueeze(0)
    with torch.no_grad():
        residual = bank(x)
    return residual[0].permute(1, 2, 0).cpu().numpy()


def update_kernels(bank, grad, lam=None):
    """
    One adaptive update: kernels <- kernels - lambda * grad
    :param bank: KernelBank, updated in place
    :param grad: tensor shaped like bank.kernels
    :param lam: step weight, defaults to bank.lam
    :return: the bank
    :rtype: KernelBank
    """
    lam = bank.lam if lam is None else float(lam)
    grad = torch.as_tensor(grad, dtype=bank.kernels.dtype)
    if grad.shape != bank.kernels.shape:
        raise BadChannelCount(
            "gradient shape {} does not match kernels {}".format(
                tuple(grad.shape), tuple(bank.kernels.shape)
            )
        )
    if not torch.isfinite(grad).all():
        raise NonFiniteGradient("kernel gradient contains NaN or Inf")
    with torch.no_grad():
        bank.kernels.sub_(lam * grad)
    return bank


def restore_from_snapshot(bank):
    """
    Resets the kernels to their initial values
    """
    with torch.no_grad():
        bank.kernels.copy_(bank.init_snapshot)
    return bank


def _dct_mask(rows, cols):
    u, v = np.meshgrid(np.arange(rows), np.arange(cols), indexing="ij")
    return (u + v) > DCT_CUTOFF


def apply_dct_preprocess(image):
    """
    Blockwise 8x8 DCT high-pass: the DC coefficient and the first two
    anti-diagonals of every block are zeroed. Trailing partial blocks are
    transformed at their own size with the same mask.
    :param image: H x W x C array
    :return: filtered image, same shape
    :rtype: np.ndarray
    """
    image = np.asarray(image, dtype=np.float64)
    height, width = image.shape[:2]
    if height < DCT_BLOCK or width < DCT_BLOCK:
        raise ImageTooSmall(
            "DCT preprocessing needs images of at least 8x8, got {}x{}".format(
                height, width
            )
        )
    out = np.empty_like(image)
    full_h = height - height % DCT_BLOCK
    full_w = width - width % DCT_BLOCK

    # full blocks in one vectorized pass
    blocks = image[:full_h, :full_w].reshape(
        full_h // DCT_BLOCK, DCT_BLOCK, full_w // DCT_BLOCK, DCT_BLOCK, -1
    )
    coeffs = fft.dctn(blocks, type=2, norm="ortho", axes=(1, 3))
    mask = _dct_mask(DCT_BLOCK, DCT_BLOCK)
    coeffs *= mask[None, :, None, :, None]
    out[:full_h, :full_w] = fft.idctn(coeffs, type=2, norm="ortho", axes=(1, 3)).reshape(
        full_h, full_w, -1
    )

    for top in range(0, height, DCT_BLOCK):
        for left in range(0, width, DCT_BLOCK):
            if top < full_h and left < full_w:
                continue
            block = image[top : top + DCT_BLOCK, left : left + DCT_BLOCK]
            rows, cols = block.shape[:2]
            c = fft.dctn(block, type=2, norm="ortho", axes=(0, 1))
            c *= _dct_mask(rows, cols)[:, :, None]
            out[top : top + rows, left : left + cols] = fft.idctn(
                c, type=2, norm="ortho", axes=(0, 1)
            )
    return out


class Preprocessor(nn.Module):
    """
    Front end of the forgery discriminator, one of:
    astray_srm (trainable kernel bank), srm_fixed, dct, none
    """

    def __init__(self, mode, bank=None):
        super().__init__()
        if mode not in PREPROCESS_MODES:
            raise BadPreprocessMode(
                "preprocess must be one of {}, got {!r}".format(
                    ", ".join(PREPROCESS_MODES), mode
                )
            )
        self.mode = mode
        self.bank = bank
        if mode in ("astray_srm", "srm_fixed") and bank is None:
            raise BadPreprocessMode("{} needs a kernel bank".format(mode))
        if mode == "srm_fixed":
            bank.kernels.requires_grad_(False)

    @property
    def out_channels(self):
        return self.bank.c_out if self.bank is not None else 3

    @property
    def adaptive(self):
        return self.mode == "astray_srm"

    def forward(self, x):
        if self.mode == "none":
            return x
        if self.mode == "dct":
            filtered = [
                apply_dct_preprocess(img.permute(1, 2, 0).detach().cpu().numpy())
                for img in x
            ]
            return torch.as_tensor(np.stack(filtered), dtype=x.dtype).permute(0, 3, 1, 2)
        return self.bank(x)


def build_preprocessor(
    mode,
    c_out=SRM_DEFAULT_CHANNELS,
    lam=SRM_DEFAULT_LAMBDA,
    threshold=SRM_DEFAULT_THRESHOLD,
    dtype=torch.float32,
):
    bank = None
    if mode in ("astray_srm", "srm_fixed"):
        bank = init_kernel_bank(c_out, lam=lam, threshold=threshold, dtype=dtype)
    return Preprocessor(mode, bank=bank)


def _sidecar_paths(path):
    stem, ext = os.path.splitext(path)
    if ext not in (".bin", ".json"):
        stem = path
    return stem + ".bin", stem + ".json"


def save_kernel_bank(bank, path):
    """
    Writes the kernels as raw little-endian float64 (<path>.bin) with a
    JSON sidecar giving shape, lambda and threshold (<path>.json)
    """
    bin_path, json_path = _sidecar_paths(path)
    data = bank.kernels.detach().cpu().numpy().astype("<f8")
    with open(bin_path, "wb") as w:
        w.write(data.tobytes())
    with open(json_path, "w") as w:
        json.dump(
            {
                "shape": list(data.shape),
                "dtype": "<f8",
                "lambda": bank.lam,
                "threshold": bank.threshold,
            },
            w,
            indent=2,
            sort_keys=True,
        )
    logger.info("[SRM] Kernel bank written to {}".format(bin_path))
    return bin_path, json_path


def load_kernel_bank(path, dtype=torch.float64):
    """
    Reads a bank written by save_kernel_bank. The snapshot is the
    canonical initialisation for the bank's size.
    """
    bin_path, json_path = _sidecar_paths(path)
    if not os.path.exists(bin_path) or not os.path.exists(json_path):
        raise DataError("kernel bank files not found: {}".format(bin_path))
    with open(json_path) as r:
        meta = json.load(r)
    with open(bin_path, "rb") as r:
        data = np.frombuffer(r.read(), dtype="<f8").copy()
    shape = tuple(meta["shape"])
    if data.size != int(np.prod(shape)):
        raise DataError(
            "{} holds {} values, sidecar declares shape {}".format(
                bin_path, data.size, shape
            )
        )
    bank = init_kernel_bank(
        shape[0], lam=meta["lambda"], threshold=meta["threshold"], dtype=dtype
    )
    with torch.no_grad():
        bank.kernels.copy_(torch.as_tensor(data.reshape(shape), dtype=dtype))
    return bank
