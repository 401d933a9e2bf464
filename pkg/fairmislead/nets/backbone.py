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
import math
import os
from dataclasses import dataclass, field
from typing import List, Tuple

import numpy as np
import torch
from torch import nn

from fairmislead.errors import ConfigError, DataError
from fairmislead.lib.utils import arrays_sha256

logger = logging.getLogger("fairmislead")

E_RED_SEED_OFFSET = 0xE7ED


class ShapeMismatch(DataError):
    """
    Raised when a tensor does not have the shape a network expects
    """

    pass


class DimMismatch(DataError):
    """
    Raised when a feature vector length does not match its consumer
    """

    pass


class StageIndexOutOfRange(ConfigError):
    pass


class FrozenExtractorError(ConfigError):
    """
    Raised when the redundant extractor is used without being frozen
    """

    pass


class BadBackboneConfig(ConfigError):
    pass


@dataclass
class BackboneConfig:
    stages: int = 4
    widths: Tuple[int, ...] = (16, 32, 64, 128)
    input_channels: int = 3
    feature_dim: int = 128
    seed: int = 0

    def __post_init__(self):
        self.widths = tuple(int(w) for w in self.widths)
        if self.stages < 1:
            raise BadBackboneConfig("stages must be >= 1, got {}".format(self.stages))
        if len(self.widths) != self.stages:
            raise BadBackboneConfig(
                "{} widths given for {} stages".format(len(self.widths), self.stages)
            )
        if any(w <= 0 for w in self.widths):
            raise BadBackboneConfig("widths must be positive, got {}".format(self.widths))
        if self.input_channels <= 0 or self.feature_dim <= 0:
            raise BadBackboneConfig("input_channels and feature_dim must be positive")

    def with_input(self, input_channels, seed=None):
        return BackboneConfig(
            stages=self.stages,
            widths=self.widths,
            input_channels=input_channels,
            feature_dim=self.feature_dim,
            seed=self.seed if seed is None else seed,
        )


@dataclass
class FeatureStack:
    """
    Per-stage maps (N x C_s x H_s x W_s) and the projected final feature
    (N x feature_dim)
    """

    stage_maps: List[torch.Tensor] = field(default_factory=list)
    final: torch.Tensor = None


class Stage(nn.Module):
    """
    conv3x3 -> GroupNorm -> SiLU -> 2x average downsample
    """

    def __init__(self, in_channels, out_channels):
        super().__init__()
        self.conv = nn.Conv2d(in_channels, out_channels, kernel_size=3, padding=1)
        self.norm = nn.GroupNorm(math.gcd(out_channels, 4), out_channels)
        self.act = nn.SiLU()
        self.pool = nn.AvgPool2d(2)

    def forward(self, x):
        return self.pool(self.act(self.norm(self.conv(x))))


class Backbone(nn.Module):
    def __init__(self, cfg, dtype=torch.float32):
        super().__init__()
        self.cfg = cfg
        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(cfg.seed)
            channels = (cfg.input_channels,) + cfg.widths
            self.stages = nn.ModuleList(
                Stage(channels[i], channels[i + 1]) for i in range(cfg.stages)
            )
            self.project = nn.Linear(cfg.widths[-1], cfg.feature_dim)
        self.to(dtype)
        self.frozen = False

    @property
    def min_input_size(self):
        return 2 ** self.cfg.stages

    def forward(self, x, injected=None):
        """
        :param x: N x input_channels x H x W
        :param injected: optional mapping stage index -> callback; the
        callback output replaces that stage's map before the next stage
        :rtype: FeatureStack
        """
        if x.ndim != 4 or x.shape[1] != self.cfg.input_channels:
            raise ShapeMismatch(
                "expected N x {} x H x W input, got {}".format(
                    self.cfg.input_channels, tuple(x.shape)
                )
            )
        if min(x.shape[-2:]) < self.min_input_size:
            raise ShapeMismatch(
                "input {}x{} too small for {} stages".format(
                    x.shape[-2], x.shape[-1], self.cfg.stages
                )
            )
        injected = injected or {}
        for idx in injected:
            if not 0 <= idx < self.cfg.stages:
                raise StageIndexOutOfRange(
                    "stage {} outside 0..{}".format(idx, self.cfg.stages - 1)
                )
        maps = list()
        h = x
        for idx, stage in enumerate(self.stages):
            h = stage(h)
            if idx in injected:
                fused = injected[idx](h)
                if fused.shape != h.shape:
                    raise ShapeMismatch(
                        "stage {} callback returned {}, expected {}".format(
                            idx, tuple(fused.shape), tuple(h.shape)
                        )
                    )
                h = fused
            maps.append(h)
        final = self.project(h.mean(dim=(-2, -1)))
        return FeatureStack(maps, final)


class Head(nn.Module):
    """
    Single-logit affine classifier
    """

    def __init__(self, in_features, seed=0, dtype=torch.float32):
        super().__init__()
        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(seed)
            self.linear = nn.Linear(in_features, 1)
        self.to(dtype)

    @property
    def in_features(self):
        return self.linear.in_features

    def forward(self, feature):
        return self.linear(feature).squeeze(-1)


def freeze(module):
    """
    Disables gradients on every parameter and marks the module frozen
    """
    for p in module.parameters():
        p.requires_grad_(False)
    module.eval()
    module.frozen = True
    return module


def build_e_red(sub_cfg, dtype=torch.float32):
    """
    The redundant extractor: same stage widths as D_sub, RGB input,
    random initialisation from a fixed seed, frozen
    """
    cfg = sub_cfg.with_input(3, seed=sub_cfg.seed + E_RED_SEED_OFFSET)
    return freeze(Backbone(cfg, dtype=dtype))


def as_batch(image, dtype=torch.float32):
    """
    H x W x C array or N x C x H x W tensor -> N x C x H x W tensor
    """
    if isinstance(image, torch.Tensor):
        return image if image.ndim == 4 else image.unsqueeze(0)
    array = np.asarray(image)
    if array.ndim == 3:
        array = array[None]
    if array.ndim != 4:
        raise ShapeMismatch("cannot batch an array of shape {}".format(array.shape))
    return torch.as_tensor(array, dtype=dtype).permute(0, 3, 1, 2)


def extract_red_features(e_red, image):
    if not getattr(e_red, "frozen", False):
        raise FrozenExtractorError("E_red must be frozen before feature extraction")
    with torch.no_grad():
        return e_red(as_batch(image, dtype=e_red.project.weight.dtype))


def forward_dsub(d_sub, residual_input, injected=None):
    return d_sub(residual_input, injected=injected)


def forward_daux(d_aux, image):
    return d_aux(as_batch(image, dtype=d_aux.project.weight.dtype))


def classify(head, feature):
    """
    :return: sigmoid(affine(feature)), one score per row
    :rtype: torch.Tensor
    """
    if feature.shape[-1] != head.in_features:
        raise DimMismatch(
            "head expects {} features, got {}".format(head.in_features, feature.shape[-1])
        )
    return torch.sigmoid(head(feature))


def count_parameters(module):
    return sum(p.numel() for p in module.parameters())


def state_digest(state):
    """
    SHA-256 over a state dict: names, shapes and float64 values in name order
    """
    return arrays_sha256(
        (name, state[name].detach().cpu().to(torch.float64).numpy()) for name in sorted(state)
    )


def parameter_digest(module):
    return state_digest(module.state_dict())


def external_weight_paths(path):
    """
    "weights.bin" -> ("weights.bin", "weights.json")
    """
    stem, ext = os.path.splitext(path)
    if ext not in (".bin", ".json"):
        stem = path
    return stem + ".bin", stem + ".json"


def load_external_weights(module, weights_file, shape_manifest):
    """
    Maps a flat little-endian float64 weight file onto named parameters.
    The JSON manifest lists {"name": ..., "shape": [...]} entries in file
    order; listed tensors are filled, the others keep their values.
    """
    for path in (weights_file, shape_manifest):
        if not os.path.isfile(path):
            raise DataError("external weights file not found: {}".format(path))
    with open(shape_manifest) as r:
        entries = json.load(r)
    if isinstance(entries, dict):
        entries = entries.get("parameters", [])
    with open(weights_file, "rb") as r:
        flat = np.frombuffer(r.read(), dtype="<f8").copy()

    state = module.state_dict()
    offset = 0
    with torch.no_grad():
        for entry in entries:
            name, shape = entry["name"], tuple(entry["shape"])
            if name not in state:
                raise ShapeMismatch("{} has no parameter {}".format(type(module).__name__, name))
            if tuple(state[name].shape) != shape:
                raise ShapeMismatch(
                    "{}: manifest shape {} vs parameter shape {}".format(
                        name, shape, tuple(state[name].shape)
                    )
                )
            size = int(np.prod(shape))
            if offset + size > flat.size:
                raise ShapeMismatch(
                    "{} holds {} values, manifest needs more".format(weights_file, flat.size)
                )
            state[name].copy_(torch.as_tensor(flat[offset : offset + size].reshape(shape)))
            offset += size
    if offset != flat.size:
        raise ShapeMismatch(
            "{} holds {} values, manifest consumed {}".format(weights_file, flat.size, offset)
        )
    logger.info("[NETS] Loaded {} external tensors from {}".format(len(entries), weights_file))
    return module
