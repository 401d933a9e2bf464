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
import zipfile
from dataclasses import dataclass, field

import numpy as np
import torch

from fairmislead.errors import DataError
from fairmislead.nets.backbone import parameter_digest, state_digest
from fairmislead.trainer.model import DetectorModel, TrainConfig

logger = logging.getLogger("fairmislead")

CHECKPOINT_FORMAT = 1
HEADER_NAME = "header.json"
PARAMS_NAME = "params.bin"
E_RED_NAME = "e_red.bin"


class CheckpointError(DataError):
    """
    Raised when a checkpoint archive is missing, malformed or does not
    match the networks its config describes
    """

    pass


@dataclass
class Checkpoint:
    model: DetectorModel
    config: TrainConfig
    epoch: int = 0
    rng_state: dict = field(default_factory=dict)

    @property
    def stage(self):
        return self.model.stage

    @property
    def e_red_digest(self):
        return parameter_digest(self.model.e_red)

    def digest(self):
        """
        Digest of the trainable state, E_red excluded
        """
        return state_digest(self.model.trainable_state())


def _pack(state):
    names = sorted(state)
    entries = [{"name": n, "shape": list(state[n].shape)} for n in names]
    blob = b"".join(
        state[n].detach().cpu().to(torch.float64).numpy().astype("<f8").tobytes()
        for n in names
    )
    return entries, blob


def _unpack(state, entries, blob, path):
    flat = np.frombuffer(blob, dtype="<f8").copy()
    offset = 0
    with torch.no_grad():
        for entry in entries:
            name, shape = entry["name"], tuple(entry["shape"])
            if name not in state or tuple(state[name].shape) != shape:
                raise CheckpointError(
                    "{}: tensor {} {} does not fit the configured networks".format(
                        path, name, shape
                    )
                )
            size = int(np.prod(shape))
            values = flat[offset : offset + size]
            if values.size != size:
                raise CheckpointError("{}: parameter data is truncated".format(path))
            state[name].copy_(torch.as_tensor(values.reshape(shape)))
            offset += size
    if offset != flat.size:
        raise CheckpointError(
            "{}: {} trailing parameter values".format(path, flat.size - offset)
        )


def save_checkpoint(ckpt, path):
    """
    Writes a zip archive holding a JSON header (config, stage, epoch,
    tensor names and shapes, digests) and the tensors as little-endian
    float64 in header order. An externally loaded E_red is stored too,
    a seeded one is rebuilt from the config on load.
    :param ckpt: checkpoint to save
    :type ckpt: Checkpoint
    :param path: output file
    :type path: str
    """
    state = ckpt.model.trainable_state()
    entries, blob = _pack(state)
    external = bool(ckpt.config.e_red_weights)
    header = {
        "format": CHECKPOINT_FORMAT,
        "stage": ckpt.stage,
        "epoch": ckpt.epoch,
        "config": ckpt.config.to_dict(),
        "rng_state": ckpt.rng_state,
        "e_red_digest": ckpt.e_red_digest,
        "e_red_external": external,
        "state_digest": state_digest(state),
        "tensors": entries,
    }
    if external:
        header["e_red_tensors"], e_red_blob = _pack(ckpt.model.e_red.state_dict())
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_DEFLATED) as zf:
        zf.writestr(HEADER_NAME, json.dumps(header, indent=2, sort_keys=True))
        zf.writestr(PARAMS_NAME, blob)
        if external:
            zf.writestr(E_RED_NAME, e_red_blob)
    logger.info(
        "[CKPT] Saved {} checkpoint (epoch {}) to {}".format(ckpt.stage, ckpt.epoch, path)
    )


def load_checkpoint(path):
    """
    Rebuilds the networks from the stored config and fills in the saved
    tensors. E_red must match the stored digest.
    :rtype: Checkpoint
    """
    if not os.path.isfile(path):
        raise CheckpointError("checkpoint not found: {}".format(path))
    try:
        with zipfile.ZipFile(path) as zf:
            header = json.loads(zf.read(HEADER_NAME).decode("utf-8"))
            blob = zf.read(PARAMS_NAME)
            external = bool(header.get("e_red_external"))
            e_red_blob = zf.read(E_RED_NAME) if external else None
    except (zipfile.BadZipFile, KeyError, ValueError) as e:
        raise CheckpointError("{} is not a valid checkpoint: {}".format(path, e))
    if header.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(
            "{}: unsupported checkpoint format {!r}".format(path, header.get("format"))
        )

    config = TrainConfig.from_dict(header["config"])
    # the archive holds external E_red weights, the original file may be gone
    model = DetectorModel(config, external_e_red=False)
    model.stage = header["stage"]
    _unpack(model.state_dict(), header["tensors"], blob, path)
    if external:
        _unpack(model.e_red.state_dict(), header["e_red_tensors"], e_red_blob, path)

    ckpt = Checkpoint(
        model=model,
        config=config,
        epoch=header["epoch"],
        rng_state=header.get("rng_state", {}),
    )
    if ckpt.e_red_digest != header["e_red_digest"]:
        raise CheckpointError(
            "{}: E_red digest differs from the stored one".format(path)
        )
    logger.debug("[CKPT] Loaded {} checkpoint from {}".format(ckpt.stage, path))
    return ckpt
