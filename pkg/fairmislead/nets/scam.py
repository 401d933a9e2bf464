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

import torch
from torch import nn

from fairmislead.nets.backbone import ShapeMismatch, StageIndexOutOfRange

DEFAULT_REDUCTION = 4
RED_PATH_INIT_SCALE = 1e-2


class ScamStage(nn.Module):
    """
    Channel attention over D_sub features plus the 1x1 fusion with the
    redundant features. The shared bottleneck transform is applied to the
    average and the max pooled vector.
    """

    def __init__(self, channels, reduction=DEFAULT_REDUCTION):
        super().__init__()
        hidden = max(1, channels // reduction)
        self.channels = channels
        self.avg_pool = nn.AdaptiveAvgPool2d(1)
        self.max_pool = nn.AdaptiveMaxPool2d(1)
        self.transform = nn.Sequential(
            nn.Conv2d(channels, hidden, 1, bias=False),
            nn.ReLU(),
            nn.Conv2d(hidden, channels, 1, bias=False),
        )
        self.fuse_conv = nn.Conv2d(2 * channels, channels, 1)
        init_fuse_conv(self.fuse_conv, channels)

    def forward(self, v_red, v_sub):
        return scam_forward(self, v_red, v_sub)


def init_fuse_conv(conv, channels):
    """
    Concatenation order is (v_red, v_sc): identity on the v_sc half,
    small random weights on the v_red half, zero bias
    """
    with torch.no_grad():
        weight = torch.zeros_like(conv.weight)
        weight[:, :channels, 0, 0] = RED_PATH_INIT_SCALE * torch.randn_like(
            weight[:, :channels, 0, 0]
        )
        weight[:, channels:, 0, 0] = torch.eye(channels, dtype=weight.dtype)
        conv.weight.copy_(weight)
        conv.bias.zero_()


def _check_channels(stage, v, what):
    if v.ndim != 4 or v.shape[1] != stage.channels:
        raise ShapeMismatch(
            "{}: expected N x {} x H x W, got {}".format(what, stage.channels, tuple(v.shape))
        )


def channel_attention(stage, v_sub):
    """
    sc = sigmoid(T(avg_pool(v_sub)) + T(max_pool(v_sub)))
    :return: N x C x 1 x 1, every entry in (0, 1)
    """
    _check_channels(stage, v_sub, "channel attention input")
    return torch.sigmoid(
        stage.transform(stage.avg_pool(v_sub)) + stage.transform(stage.max_pool(v_sub))
    )


def enhance(v_sub, sc):
    """
    v_sc = v_sub + sc * v_sub
    """
    if sc.ndim != v_sub.ndim or sc.shape[1] != v_sub.shape[1]:
        raise ShapeMismatch(
            "attention {} does not broadcast over {}".format(tuple(sc.shape), tuple(v_sub.shape))
        )
    try:
        return v_sub + sc * v_sub
    except RuntimeError as e:
        raise ShapeMismatch(str(e))


def fuse_hybrid(stage, v_red, v_sc):
    """
    v_aug = conv1x1(concat(v_red, v_sc))
    """
    if v_red.shape != v_sc.shape:
        raise ShapeMismatch(
            "redundant map {} vs enhanced map {}".format(tuple(v_red.shape), tuple(v_sc.shape))
        )
    _check_channels(stage, v_sc, "hybrid fusion input")
    return stage.fuse_conv(torch.cat([v_red, v_sc], dim=1))


def scam_forward(stage, v_red, v_sub):
    sc = channel_attention(stage, v_sub)
    return fuse_hybrid(stage, v_red, enhance(v_sub, sc))


class ConcatFuse(nn.Module):
    """
    Plain concat + 1x1 conv, no attention
    """

    def __init__(self, channels):
        super().__init__()
        self.channels = channels
        self.fuse_conv = nn.Conv2d(2 * channels, channels, 1)
        init_fuse_conv(self.fuse_conv, channels)

    def forward(self, v_red, v_sub):
        return fuse_hybrid(self, v_red, v_sub)


class ScamBlock(nn.Module):
    """
    The fusion modules of D_sub, keyed by stage index. With use_scam
    False a single ConcatFuse sits at the last stage.
    """

    def __init__(self, widths, stage_indices=(2, 3), use_scam=True, seed=0, dtype=torch.float32):
        super().__init__()
        n_stages = len(widths)
        if use_scam:
            indices = sorted(set(int(i) for i in stage_indices))
        else:
            indices = [n_stages - 1]
        for idx in indices:
            if not 0 <= idx < n_stages:
                raise StageIndexOutOfRange(
                    "SCAM stage {} outside 0..{}".format(idx, n_stages - 1)
                )
        self.use_scam = use_scam
        self.indices = tuple(indices)
        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(seed)
            self.fusers = nn.ModuleDict(
                (
                    str(idx),
                    ScamStage(widths[idx]) if use_scam else ConcatFuse(widths[idx]),
                )
                for idx in indices
            )
        self.to(dtype)

    def make_injection(self, red_stack):
        """
        Stage callbacks for Backbone.forward that fuse the matching
        E_red stage map into the D_sub stream
        """
        return {
            idx: _bind(self.fusers[str(idx)], red_stack.stage_maps[idx])
            for idx in self.indices
        }


def _bind(fuser, v_red):
    def fuse(v_sub):
        return fuser(v_red, v_sub)

    return fuse
