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
from dataclasses import asdict, dataclass, field, fields
from typing import Optional, Tuple

import torch
from torch import nn

from fairmislead.constants import SRM_DEFAULT_CHANNELS, SRM_DEFAULT_LAMBDA, SRM_DEFAULT_THRESHOLD
from fairmislead.errors import ConfigError
from fairmislead.losses import LossWeights
from fairmislead.nets.backbone import (
    Backbone,
    BackboneConfig,
    Head,
    build_e_red,
    classify,
    external_weight_paths,
    load_external_weights,
)
from fairmislead.nets.scam import ScamBlock
from fairmislead.srm.srm import PREPROCESS_MODES, build_preprocessor
from fairmislead.trainer.augment import AugmentConfig

logger = logging.getLogger("fairmislead")

DTYPES = {"float32": torch.float32, "float64": torch.float64}
FINAL_STREAMS = ("plain", "injected")

STAGE_INIT = "init"
STAGE_PRETRAIN = "pretrain"
STAGE_MISLEADING = "misleading"


class BadTrainConfig(ConfigError):
    pass


@dataclass(frozen=True)
class AblationFlags:
    use_bias_sampling: bool = True
    use_contrastive: bool = True
    use_scam: bool = True


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-3
    batch_size: int = 16
    epochs_pretrain: int = 5
    epochs_misleading: int = 15
    input_size: int = 64
    weights: LossWeights = field(default_factory=LossWeights)
    lambda_srm: float = SRM_DEFAULT_LAMBDA
    scam_stages: Tuple[int, ...] = (2, 3)
    ablation: AblationFlags = field(default_factory=AblationFlags)
    preprocess: str = "astray_srm"
    seed: int = 0
    widths: Tuple[int, ...] = (16, 32, 64, 128)
    aux_widths: Tuple[int, ...] = (8, 16)
    feature_dim: int = 128
    srm_channels: int = SRM_DEFAULT_CHANNELS
    srm_threshold: Optional[float] = SRM_DEFAULT_THRESHOLD
    final_stream: str = "plain"
    pair_reals: bool = False
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    dtype: str = "float32"
    val_every_epoch: bool = False
    # external E_red weights: a float64 .bin file with a .json shape sidecar
    e_red_weights: Optional[str] = None

    def __post_init__(self):
        # normalise sequences coming from YAML lists
        object.__setattr__(self, "scam_stages", tuple(int(i) for i in self.scam_stages))
        object.__setattr__(self, "widths", tuple(int(w) for w in self.widths))
        object.__setattr__(self, "aux_widths", tuple(int(w) for w in self.aux_widths))
        if self.epochs_pretrain < 0 or self.epochs_misleading < 0:
            raise BadTrainConfig("epoch counts must be non-negative")
        if self.batch_size < 2:
            raise BadTrainConfig("batch_size must be >= 2, got {}".format(self.batch_size))
        if not self.lr > 0:
            raise BadTrainConfig("lr must be positive, got {}".format(self.lr))
        if self.lambda_srm < 0:
            raise BadTrainConfig("lambda_srm must be >= 0, got {}".format(self.lambda_srm))
        if self.preprocess not in PREPROCESS_MODES:
            raise BadTrainConfig(
                "preprocess must be one of {}, got {!r}".format(
                    ", ".join(PREPROCESS_MODES), self.preprocess
                )
            )
        if self.final_stream not in FINAL_STREAMS:
            raise BadTrainConfig(
                "final_stream must be plain or injected, got {!r}".format(self.final_stream)
            )
        if self.dtype not in DTYPES:
            raise BadTrainConfig("dtype must be float32 or float64, got {!r}".format(self.dtype))
        if self.input_size < 2 ** len(self.widths):
            raise BadTrainConfig(
                "input_size {} too small for {} stages".format(self.input_size, len(self.widths))
            )

    @property
    def torch_dtype(self):
        return DTYPES[self.dtype]

    def backbone_config(self, input_channels):
        return BackboneConfig(
            stages=len(self.widths),
            widths=self.widths,
            input_channels=input_channels,
            feature_dim=self.feature_dim,
            seed=self.seed,
        )

    def to_dict(self):
        data = asdict(self)
        for key in ("scam_stages", "widths", "aux_widths"):
            data[key] = list(data[key])
        return data

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        nested = {"weights": LossWeights, "ablation": AblationFlags, "augment": AugmentConfig}
        for key, sub_cls in nested.items():
            if isinstance(data.get(key), dict):
                data[key] = sub_cls(**data[key])
        return cls(**data)

    @classmethod
    def field_names(cls):
        return [f.name for f in fields(cls)]


class DetectorModel(nn.Module):
    """
    Every network of the pipeline. e_red is frozen and built from the
    config seed, or loaded from cfg.e_red_weights; it is not part of
    trainable_state(). With external_e_red=False the weights file is not
    read and the caller fills e_red in.
    """

    def __init__(self, cfg, external_e_red=True):
        super().__init__()
        dtype = cfg.torch_dtype
        self.cfg = cfg
        self.stage = STAGE_INIT
        self.preprocessor = build_preprocessor(
            cfg.preprocess,
            c_out=cfg.srm_channels,
            lam=cfg.lambda_srm,
            threshold=cfg.srm_threshold,
            dtype=dtype,
        )
        self.d_sub = Backbone(
            cfg.backbone_config(self.preprocessor.out_channels), dtype=dtype
        )
        aux_cfg = BackboneConfig(
            stages=len(cfg.aux_widths),
            widths=cfg.aux_widths,
            input_channels=3,
            feature_dim=cfg.feature_dim,
            seed=cfg.seed + 1,
        )
        self.d_aux = Backbone(aux_cfg, dtype=dtype)
        self.head_sub = Head(cfg.feature_dim, seed=cfg.seed + 2, dtype=dtype)
        self.head_fused = Head(2 * cfg.feature_dim, seed=cfg.seed + 3, dtype=dtype)
        self.scam = ScamBlock(
            cfg.widths,
            stage_indices=cfg.scam_stages,
            use_scam=cfg.ablation.use_scam,
            seed=cfg.seed + 4,
            dtype=dtype,
        )
        self.e_red = build_e_red(cfg.backbone_config(3), dtype=dtype)
        if cfg.e_red_weights and external_e_red:
            load_external_weights(self.e_red, *external_weight_paths(cfg.e_red_weights))

    @property
    def bank(self):
        return self.preprocessor.bank

    def trainable_state(self):
        return {k: v for k, v in self.state_dict().items() if not k.startswith("e_red.")}

    def sub_features(self, x, injected=None):
        return self.d_sub(self.preprocessor(x), injected=injected)

    def score(self, x):
        """
        Test-time scores: D_sub runs without injection. Pretrained models
        score with the D_sub head, misleading-trained models with the
        fused head on (V_sub_final, V_aux_final).
        """
        sub_final = self.sub_features(x).final
        if self.stage != STAGE_MISLEADING:
            return classify(self.head_sub, sub_final)
        aux_final = self.d_aux(x).final
        return classify(self.head_fused, torch.cat([sub_final, aux_final], dim=-1))


def build_model(cfg, external_e_red=True):
    return DetectorModel(cfg, external_e_red=external_e_red)
