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

import math
from dataclasses import dataclass

import torch
import torch.nn.functional as F

from fairmislead.constants import SCORE_EPSILON
from fairmislead.data.manifest import Label
from fairmislead.errors import ConfigError, DataError, NumericalError
from fairmislead.nets.backbone import DimMismatch


class CalledOnRealSample(DataError):
    """
    Raised when the misleading classification loss is given a real sample
    """

    pass


class NonFiniteComponent(NumericalError):
    pass


class BadLossWeights(ConfigError):
    pass


@dataclass(frozen=True)
class LossWeights:
    alpha: float = 0.05
    beta: float = 1.0
    margin: float = 1.0
    normalize_features: bool = True
    label_smoothing: float = 0.0

    def __post_init__(self):
        for name in ("alpha", "beta", "margin"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value >= 0):
                raise BadLossWeights(
                    "{} must be finite and >= 0, got {}".format(name, value)
                )
        if not 0.0 <= self.label_smoothing < 0.5:
            raise BadLossWeights(
                "label_smoothing must be in [0, 0.5), got {}".format(self.label_smoothing)
            )


def _as_tensor(value):
    if isinstance(value, torch.Tensor):
        return value
    return torch.as_tensor(value, dtype=torch.float64)


def binary_cls_loss(score, label):
    """
    Mean binary cross-entropy of scores against labels, scores clamped
    to [1e-7, 1 - 1e-7]
    :param score: scores in [0, 1], scalar or batch
    :param label: 0/1 targets (soft targets allowed), same shape
    :rtype: torch.Tensor
    """
    score = _as_tensor(score)
    label = _as_tensor(label).to(score.dtype)
    if label.shape != score.shape:
        raise DimMismatch(
            "{} scores vs {} labels".format(tuple(score.shape), tuple(label.shape))
        )
    score = score.clamp(SCORE_EPSILON, 1.0 - SCORE_EPSILON)
    return F.binary_cross_entropy(score, label)


def misleading_cls_loss(score, labels=None, label_smoothing=0.0):
    """
    Cross-entropy towards the fake label of scores from the injected stream
    :param score: scores of fake samples after redundant injection
    :param labels: labels of the scored samples, checked when given
    """
    score = _as_tensor(score)
    if labels is not None:
        labels = _as_tensor(labels)
        if bool((labels != int(Label.FAKE)).any()):
            raise CalledOnRealSample("misleading classification loss got a real sample")
    target = torch.full_like(score, float(Label.FAKE) - label_smoothing)
    return binary_cls_loss(score, target)


def triplet_con_loss(anchor, positive, negative, margin=1.0):
    """
    max(m + |a - p| - |a - n|, 0), averaged over the batch
    """
    anchor, positive, negative = (_as_tensor(x) for x in (anchor, positive, negative))
    if not anchor.shape == positive.shape == negative.shape:
        raise DimMismatch(
            "triplet shapes differ: {}, {}, {}".format(
                tuple(anchor.shape), tuple(positive.shape), tuple(negative.shape)
            )
        )
    d_pos = torch.linalg.vector_norm(anchor - positive, dim=-1)
    d_neg = torch.linalg.vector_norm(anchor - negative, dim=-1)
    return torch.clamp(margin + d_pos - d_neg, min=0.0).mean()


def feature_contrast_loss(v_sub_final, v_red_final, weights):
    """
    Triplet term with anchor = positive = V_sub_final and
    negative = V_red_final
    """
    if weights.normalize_features:
        v_sub_final = F.normalize(v_sub_final, dim=-1)
        v_red_final = F.normalize(v_red_final, dim=-1)
    return triplet_con_loss(v_sub_final, v_sub_final, v_red_final, weights.margin)


def _finite(value):
    if isinstance(value, torch.Tensor):
        return bool(torch.isfinite(value).all())
    return math.isfinite(value)


def total_misleading_loss(l_cls, l_con, l_final, weights):
    """
    l_cls + alpha * l_con + beta * l_final
    """
    for name, value in (("l_cls", l_cls), ("l_con", l_con), ("l_final", l_final)):
        if not _finite(value):
            raise NonFiniteComponent("{} is not finite: {}".format(name, value))
    return l_cls + weights.alpha * l_con + weights.beta * l_final
