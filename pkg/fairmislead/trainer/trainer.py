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

import csv
import logging

import numpy as np
import torch

from fairmislead.constants import TRAINING_LOG_HEADER
from fairmislead.data.manifest import Label, PredictionRecord, Split
from fairmislead.errors import DataError, NumericalError
from fairmislead.library.library import build_library, select_redundant
from fairmislead.lib.utils import check_progressbar, derive_rng
from fairmislead.losses import (
    NonFiniteComponent,
    binary_cls_loss,
    feature_contrast_loss,
    misleading_cls_loss,
    total_misleading_loss,
)
from fairmislead.metrics.metrics import roc_auc
from fairmislead.nets.backbone import (
    ShapeMismatch,
    classify,
    extract_red_features,
    parameter_digest,
)
from fairmislead.srm.srm import update_kernels
from fairmislead.trainer.augment import augment_image
from fairmislead.trainer.checkpoint import Checkpoint, CheckpointError
from fairmislead.trainer.model import (
    STAGE_MISLEADING,
    STAGE_PRETRAIN,
    build_model,
)

logger = logging.getLogger("fairmislead")

# RNG stream keys
STREAM_PRETRAIN = 1
STREAM_MISLEADING = 2
STREAM_PAIRING = 3

# tensors a pretrain checkpoint hands over to the misleading stage
PRETRAINED_PREFIXES = ("preprocessor.", "d_sub.", "head_sub.")


class EmptySplit(DataError):
    pass


class SingleClassSplit(DataError):
    pass


class NonFiniteLoss(NumericalError):
    """
    Raised when a loss turns NaN/Inf; carries the step and the components
    """

    def __init__(self, step, components):
        self.step = step
        self.components = components
        super().__init__(
            "non-finite loss at step {}: {}".format(
                step, ", ".join("{}={}".format(k, v) for k, v in components.items())
            )
        )


class FrozenContractViolation(NumericalError):
    """
    Raised when E_red parameters changed during training
    """

    pass


class TrainingLog:
    """
    Per-step loss rows plus the redundant pairing audit
    """

    def __init__(self):
        self.rows = list()
        self.pairs = list()

    def __len__(self):
        return len(self.rows)

    @property
    def next_step(self):
        return len(self.rows)

    def record(self, epoch, l_cls, l_con, l_final, total):
        self.rows.append((self.next_step, epoch, l_cls, l_con, l_final, total))

    def record_pair(self, epoch, query_subgroup, partner_subgroup):
        self.pairs.append((epoch, query_subgroup, partner_subgroup))

    def same_subgroup_pairs(self, epoch=None):
        return sum(
            1
            for e, query, partner in self.pairs
            if query == partner and (epoch is None or e == epoch)
        )

    def write(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fp:
            writer = csv.writer(fp, lineterminator="\n")
            writer.writerow(TRAINING_LOG_HEADER)
            for step, epoch, *values in self.rows:
                writer.writerow([step, epoch] + [repr(float(v)) for v in values])
        logger.info("[TRAIN] Training log written to {}".format(path))

    @classmethod
    def read(cls, path):
        log = cls()
        with open(path, newline="", encoding="utf-8") as fp:
            for row in csv.DictReader(fp):
                log.rows.append(
                    (
                        int(row["step"]),
                        int(row["epoch"]),
                        float(row["l_cls"]),
                        float(row["l_con"]),
                        float(row["l_final"]),
                        float(row["total"]),
                    )
                )
        return log


def numpy_dtype(cfg):
    return np.float64 if cfg.dtype == "float64" else np.float32


def load_split(manifest, split, cfg, enable_progressbar=False):
    """
    Loads every sample of a split into memory, checking the image size
    against cfg.input_size
    :rtype: list
    """
    samples = list()
    for entry in check_progressbar(manifest.in_split(split), enable_progressbar):
        sample = manifest.load_sample(entry, dtype=numpy_dtype(cfg))
        _check_size(sample.image, cfg, entry.id)
        samples.append(sample)
    return samples


def _check_size(image, cfg, sample_id):
    if image.shape[:2] != (cfg.input_size, cfg.input_size):
        raise ShapeMismatch(
            "sample {} is {}x{}, model expects {}x{}".format(
                sample_id, image.shape[0], image.shape[1], cfg.input_size, cfg.input_size
            )
        )


def _check_split(samples, split):
    if not samples:
        raise EmptySplit("{} split is empty".format(split.value))
    labels = set(s.label for s in samples)
    if len(labels) < 2:
        raise SingleClassSplit(
            "{} split only holds {} samples".format(split.value, labels.pop().name.lower())
        )


def to_batch(images, dtype):
    """
    List of H x W x 3 arrays -> N x 3 x H x W tensor
    """
    return torch.as_tensor(np.stack(images)).permute(0, 3, 1, 2).contiguous().to(dtype)


def _batches(n, batch_size, rng):
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start : start + batch_size]


def _labels(batch, dtype):
    return torch.tensor([float(s.label) for s in batch], dtype=dtype)


def _validation_auc(model, samples, cfg):
    if not samples:
        return float("nan")
    records = _score_samples(model, samples, cfg, batch_size=max(cfg.batch_size, 64))
    if len(set(r.label for r in records)) < 2:
        return float("nan")
    return roc_auc(records)


def pretrain_dsub(cfg, manifest, log=None, enable_progressbar=False, samples=None):
    """
    Trains D_sub and its head as a plain binary classifier. The kernel
    bank is not updated in this stage.
    :param cfg: training configuration
    :type cfg: TrainConfig
    :param manifest: dataset whose train split is used
    :param log: TrainingLog receiving one row per step
    :param samples: preloaded train samples, loaded from manifest if None
    :return: checkpoint tagged "pretrain"
    :rtype: Checkpoint
    """
    train = samples if samples is not None else load_split(manifest, Split.TRAIN, cfg)
    _check_split(train, Split.TRAIN)
    val = load_split(manifest, Split.VAL, cfg) if cfg.val_every_epoch else []
    log = log if log is not None else TrainingLog()
    dtype = cfg.torch_dtype

    model = build_model(cfg)
    model.stage = STAGE_PRETRAIN
    if model.bank is not None:
        model.bank.kernels.requires_grad_(False)
    optimizer = torch.optim.Adam(
        list(model.d_sub.parameters()) + list(model.head_sub.parameters()), lr=cfg.lr
    )

    logger.info(
        "[PRETRAIN] {} samples, {} epochs, batch {}".format(
            len(train), cfg.epochs_pretrain, cfg.batch_size
        )
    )
    for epoch in check_progressbar(range(cfg.epochs_pretrain), enable_progressbar):
        rng = derive_rng(cfg.seed, STREAM_PRETRAIN, epoch)
        losses = list()
        for idx in _batches(len(train), cfg.batch_size, rng):
            batch = [train[i] for i in idx]
            x = to_batch([augment_image(s.image, rng, cfg.augment) for s in batch], dtype)
            y = _labels(batch, dtype)
            loss = binary_cls_loss(classify(model.head_sub, model.sub_features(x).final), y)
            if not torch.isfinite(loss):
                raise NonFiniteLoss(log.next_step, {"l_final": loss.item()})
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            value = loss.item()
            losses.append(value)
            log.record(
                epoch, 0.0, 0.0, value, total_misleading_loss(0.0, 0.0, value, cfg.weights)
            )
        message = "[PRETRAIN] epoch {}: mean loss {:.5f}".format(epoch, float(np.mean(losses)))
        if val:
            message += ", val AUC {:.4f}".format(_validation_auc(model, val, cfg))
        logger.info(message)

    return Checkpoint(
        model=model,
        config=cfg,
        epoch=cfg.epochs_pretrain,
        rng_state={"seed": cfg.seed, "stream": STREAM_PRETRAIN, "next_epoch": cfg.epochs_pretrain},
    )


def misleading_losses(model, x, labels, paired, red_x, weights, use_contrastive=True,
                      final_stream="plain"):
    """
    Loss components of one misleading-training batch.
    The paired rows of x get the E_red features of red_x injected into
    D_sub through the SCAM block; the injected final feature of the fakes
    is pushed towards the fake label and, by the triplet term, away from
    the redundant final feature. Every row feeds the fused head.
    :param model: DetectorModel
    :param x: N x 3 x H x W batch
    :param labels: N labels as floats
    :param paired: indices of the rows that receive an injection
    :param red_x: redundant partner images, one per paired row
    :return: (l_cls, l_con, l_final) as scalar tensors
    """
    zero = x.new_zeros(())
    pre = model.preprocessor(x)
    sub_final = model.d_sub(pre).final
    l_cls = l_con = zero
    if len(paired):
        paired = torch.as_tensor(paired, dtype=torch.long)
        red = extract_red_features(model.e_red, red_x)
        injected = model.d_sub(pre[paired], injected=model.scam.make_injection(red))
        fakes = labels[paired] == float(Label.FAKE)
        if bool(fakes.any()):
            l_cls = misleading_cls_loss(
                classify(model.head_sub, injected.final[fakes]),
                label_smoothing=weights.label_smoothing,
            )
        if use_contrastive:
            l_con = feature_contrast_loss(injected.final, red.final, weights)
        if final_stream == "injected":
            sub_final = sub_final.index_copy(0, paired, injected.final)
    aux_final = model.d_aux(x).final
    scores = classify(model.head_fused, torch.cat([sub_final, aux_final], dim=-1))
    l_final = binary_cls_loss(scores, labels)
    return l_cls, l_con, l_final


def _inherit_pretrained(model, start):
    """
    Copies E_red and the pretrained preprocessor, D_sub and head tensors
    """
    source = start.model.state_dict()
    target = model.state_dict()
    with torch.no_grad():
        for name, value in source.items():
            if not name.startswith(PRETRAINED_PREFIXES + ("e_red.",)):
                continue
            if name not in target or target[name].shape != value.shape:
                raise CheckpointError(
                    "pretrained tensor {} does not fit the misleading-stage networks".format(
                        name
                    )
                )
            target[name].copy_(value)


def misleading_train(cfg, manifest, start, log=None, enable_progressbar=False, samples=None):
    """
    Misleading semantic augmentation stage. Starts from a pretrain
    checkpoint; D_sub, SCAM, D_aux and both heads are trained with Adam,
    the kernel bank with kernels <- kernels - lambda_srm * grad.
    :param cfg: training configuration
    :type cfg: TrainConfig
    :param manifest: dataset whose train split is used
    :param start: checkpoint returned by pretrain_dsub
    :type start: Checkpoint
    :param log: TrainingLog receiving the loss rows and the pairing audit
    :return: checkpoint tagged "misleading"
    :rtype: Checkpoint
    """
    if start.stage != STAGE_PRETRAIN:
        raise CheckpointError(
            "misleading training starts from a pretrain checkpoint, got {!r}".format(start.stage)
        )
    train = samples if samples is not None else load_split(manifest, Split.TRAIN, cfg)
    _check_split(train, Split.TRAIN)
    val = load_split(manifest, Split.VAL, cfg) if cfg.val_every_epoch else []
    library = build_library(train, split=Split.TRAIN)
    log = log if log is not None else TrainingLog()
    dtype = cfg.torch_dtype
    weights = cfg.weights

    model = build_model(cfg, external_e_red=False)
    _inherit_pretrained(model, start)
    model.stage = STAGE_MISLEADING
    bank = model.bank
    adaptive = model.preprocessor.adaptive
    if bank is not None:
        bank.kernels.requires_grad_(adaptive)
    trainable = (model.d_sub, model.scam, model.head_sub, model.d_aux, model.head_fused)
    optimizer = torch.optim.Adam(
        [p for module in trainable for p in module.parameters()], lr=cfg.lr
    )
    e_red_digest = parameter_digest(model.e_red)

    logger.info(
        "[MISLEAD] {} samples, {} epochs, preprocess {}, ablation {}".format(
            len(train), cfg.epochs_misleading, cfg.preprocess, cfg.ablation
        )
    )
    first_epoch = start.epoch
    for epoch in check_progressbar(
        range(first_epoch, first_epoch + cfg.epochs_misleading), enable_progressbar
    ):
        rng = derive_rng(cfg.seed, STREAM_MISLEADING, epoch)
        pair_rng = derive_rng(cfg.seed, STREAM_PAIRING, epoch)
        totals = list()
        for idx in _batches(len(train), cfg.batch_size, rng):
            batch = [train[i] for i in idx]
            x = to_batch([augment_image(s.image, rng, cfg.augment) for s in batch], dtype)
            y = _labels(batch, dtype)
            paired, partners = list(), list()
            for j, sample in enumerate(batch):
                if sample.label != Label.FAKE and not cfg.pair_reals:
                    continue
                partner = select_redundant(
                    sample, library, pair_rng, use_bias=cfg.ablation.use_bias_sampling
                )
                log.record_pair(epoch, sample.subgroup, partner.subgroup)
                paired.append(j)
                partners.append(partner.image)
            red_x = to_batch(partners, dtype) if partners else None

            l_cls, l_con, l_final = misleading_losses(
                model,
                x,
                y,
                paired,
                red_x,
                weights,
                use_contrastive=cfg.ablation.use_contrastive,
                final_stream=cfg.final_stream,
            )
            components = {
                "l_cls": l_cls.item(),
                "l_con": l_con.item(),
                "l_final": l_final.item(),
            }
            try:
                total = total_misleading_loss(l_cls, l_con, l_final, weights)
            except NonFiniteComponent:
                raise NonFiniteLoss(log.next_step, components)

            optimizer.zero_grad()
            if bank is not None:
                bank.kernels.grad = None
            total.backward()
            optimizer.step()
            if adaptive and bank.kernels.grad is not None:
                update_kernels(bank, bank.kernels.grad, cfg.lambda_srm)

            logged_total = total_misleading_loss(
                components["l_cls"], components["l_con"], components["l_final"], weights
            )
            totals.append(logged_total)
            log.record(
                epoch, components["l_cls"], components["l_con"], components["l_final"], logged_total
            )

        same = log.same_subgroup_pairs(epoch)
        if same:
            logger.warning("[MISLEAD][W] epoch {}: {} same-subgroup pairs".format(epoch, same))
        message = "[MISLEAD] epoch {}: mean total {:.5f}, same-subgroup pairs {}".format(
            epoch, float(np.mean(totals)), same
        )
        if val:
            message += ", val AUC {:.4f}".format(_validation_auc(model, val, cfg))
        logger.info(message)

    if parameter_digest(model.e_red) != e_red_digest:
        raise FrozenContractViolation("E_red parameters changed during misleading training")
    last = first_epoch + cfg.epochs_misleading
    return Checkpoint(
        model=model,
        config=cfg,
        epoch=last,
        rng_state={"seed": cfg.seed, "stream": STREAM_MISLEADING, "next_epoch": last},
    )


def _score_samples(model, samples, cfg, batch_size):
    records = list()
    model.eval()
    with torch.no_grad():
        for start in range(0, len(samples), batch_size):
            chunk = samples[start : start + batch_size]
            scores = model.score(to_batch([s.image for s in chunk], cfg.torch_dtype))
            for sample, score in zip(chunk, scores.tolist()):
                records.append(
                    PredictionRecord(
                        sample_id=sample.id,
                        score=float(score),
                        label=sample.label,
                        subgroup=sample.subgroup,
                        method=sample.method,
                    )
                )
    return records


def run_inference(ckpt, manifest, split, batch_size=64, transform=None, enable_progressbar=False):
    """
    Scores every sample of a split without redundant injection
    :param ckpt: checkpoint to score with
    :type ckpt: Checkpoint
    :param manifest: dataset manifest
    :param split: split to score
    :param transform: optional callable (image, position, entry) -> image
    applied to each decoded image before scoring
    :return: one record per sample, in manifest order
    :rtype: list
    """
    split = Split(split) if not isinstance(split, Split) else split
    cfg = ckpt.config
    entries = manifest.in_split(split)
    images = list()
    for position, entry in enumerate(check_progressbar(entries, enable_progressbar)):
        sample = manifest.load_sample(entry, dtype=numpy_dtype(cfg))
        _check_size(sample.image, cfg, entry.id)
        image = sample.image
        if transform is not None:
            image = np.clip(transform(image, position, entry), 0.0, 1.0).astype(image.dtype)
        images.append(image)

    records = list()
    model = ckpt.model
    model.eval()
    with torch.no_grad():
        for start in range(0, len(entries), batch_size):
            scores = model.score(to_batch(images[start : start + batch_size], cfg.torch_dtype))
            for entry, score in zip(entries[start : start + batch_size], scores.tolist()):
                records.append(
                    PredictionRecord(
                        sample_id=entry.id,
                        score=float(score),
                        label=entry.label,
                        subgroup=entry.subgroup,
                        method=entry.method,
                    )
                )
    logger.info(
        "[INFER] Scored {} {} samples with the {} checkpoint".format(
            len(records), split.value, ckpt.stage
        )
    )
    return records


def train_pipeline(cfg, manifest, pretrain_only=False, log=None, enable_progressbar=False):
    """
    Library build, E_red setup, D_sub pretraining and, unless
    pretrain_only, misleading training
    :return: (pretrain checkpoint, final checkpoint, training log)
    """
    log = log if log is not None else TrainingLog()
    samples = load_split(manifest, Split.TRAIN, cfg, enable_progressbar=enable_progressbar)
    pretrained = pretrain_dsub(
        cfg, manifest, log=log, enable_progressbar=enable_progressbar, samples=samples
    )
    if pretrain_only:
        return pretrained, pretrained, log
    final = misleading_train(
        cfg, manifest, pretrained, log=log, enable_progressbar=enable_progressbar, samples=samples
    )
    return pretrained, final, log
