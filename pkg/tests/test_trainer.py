import json
import math
import os

import numpy as np
import pytest
import torch

from conftest import tiny_train_config
from fairmislead.data.manifest import Label, Split
from fairmislead.errors import DataError
from fairmislead.losses import total_misleading_loss
from fairmislead.nets.backbone import parameter_digest
from fairmislead.trainer.checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from fairmislead.trainer.model import AblationFlags, BadTrainConfig, TrainConfig, build_model
from fairmislead.trainer.trainer import (
    EmptySplit,
    SingleClassSplit,
    TrainingLog,
    load_split,
    misleading_losses,
    misleading_train,
    pretrain_dsub,
    run_inference,
    to_batch,
    train_pipeline,
)


def _steps_per_epoch(n, batch_size):
    return math.ceil(n / batch_size)


def test_pipeline_stages(trained):
    pretrained, final, log = trained
    assert pretrained.stage == "pretrain"
    assert final.stage == "misleading"
    assert pretrained.epoch == 1 and final.epoch == 2
    assert final.e_red_digest == pretrained.e_red_digest


def test_log_has_one_row_per_step(trained):
    _, _, log = trained
    per_epoch = _steps_per_epoch(48, 8)
    assert len(log) == 2 * per_epoch
    assert [row[0] for row in log.rows] == list(range(len(log)))
    assert [row[1] for row in log.rows] == [0] * per_epoch + [1] * per_epoch
    for step, epoch, l_cls, l_con, l_final, total in log.rows:
        assert all(math.isfinite(v) for v in (l_cls, l_con, l_final, total))
        if epoch == 0:
            assert l_cls == 0.0 and l_con == 0.0


def test_no_fake_is_paired_within_its_own_subgroup(trained):
    _, _, log = trained
    assert log.pairs
    assert log.same_subgroup_pairs() == 0
    assert all(epoch == 1 for epoch, _, _ in log.pairs)


def test_training_is_deterministic(tiny_dataset, trained):
    _, final, log = trained
    _, again, again_log = train_pipeline(tiny_train_config(), tiny_dataset)
    assert again.digest() == final.digest()
    assert again_log.rows == log.rows
    assert again_log.pairs == log.pairs


def test_seed_changes_the_result(tiny_dataset, trained):
    pretrained, _, _ = trained
    other = pretrain_dsub(tiny_train_config(seed=1), tiny_dataset)
    assert other.digest() != pretrained.digest()


def test_checkpoint_round_trip_scores_identically(tmp_path, tiny_dataset, trained):
    _, final, _ = trained
    path = str(tmp_path / "final.ckpt")
    save_checkpoint(final, path)
    loaded = load_checkpoint(path)
    assert loaded.stage == final.stage
    assert loaded.epoch == final.epoch
    assert loaded.config == final.config
    assert loaded.digest() == final.digest()
    assert loaded.e_red_digest == final.e_red_digest

    before = run_inference(final, tiny_dataset, Split.TEST)
    after = run_inference(loaded, tiny_dataset, Split.TEST)
    assert [r.score for r in after] == [r.score for r in before]
    assert [r.sample_id for r in after] == [e.id for e in tiny_dataset.in_split(Split.TEST)]


def _write_e_red_weights(directory, source):
    state = source.state_dict()
    names = sorted(state)
    entries = [{"name": n, "shape": list(state[n].shape)} for n in names]
    values = np.concatenate([state[n].detach().double().numpy().ravel() for n in names])
    bin_path = os.path.join(directory, "e_red.bin")
    with open(bin_path, "wb") as w:
        w.write(values.astype("<f8").tobytes())
    with open(os.path.join(directory, "e_red.json"), "w") as w:
        json.dump({"parameters": entries}, w)
    return bin_path


def test_external_e_red_is_stored_in_the_checkpoint(tmp_path, tiny_dataset):
    # any frozen extractor of the right shape, here one from another seed
    source = build_model(tiny_train_config(seed=5)).e_red
    expected = parameter_digest(source)
    weights = _write_e_red_weights(str(tmp_path), source)

    cfg = tiny_train_config(e_red_weights=weights)
    assert parameter_digest(build_model(cfg).e_red) == expected
    assert parameter_digest(build_model(tiny_train_config()).e_red) != expected

    pretrained, final, _ = train_pipeline(cfg, tiny_dataset)
    assert pretrained.e_red_digest == expected
    assert final.e_red_digest == expected

    path = str(tmp_path / "final.ckpt")
    save_checkpoint(final, path)
    os.remove(weights)
    os.remove(str(tmp_path / "e_red.json"))
    with pytest.raises(DataError):
        build_model(cfg)

    loaded = load_checkpoint(path)
    assert loaded.e_red_digest == expected
    assert loaded.digest() == final.digest()
    before = run_inference(final, tiny_dataset, Split.TEST)
    after = run_inference(loaded, tiny_dataset, Split.TEST)
    assert [r.score for r in after] == [r.score for r in before]


def test_load_checkpoint_errors(tmp_path):
    with pytest.raises(CheckpointError):
        load_checkpoint(str(tmp_path / "missing.ckpt"))
    junk = tmp_path / "junk.ckpt"
    junk.write_bytes(b"not a zip archive")
    with pytest.raises(CheckpointError):
        load_checkpoint(str(junk))


def test_inference_scores_are_probabilities(tiny_dataset, trained):
    pretrained, final, _ = trained
    for ckpt in (pretrained, final):
        records = run_inference(ckpt, tiny_dataset, "test")
        assert len(records) == 40
        assert all(0.0 <= r.score <= 1.0 for r in records)


def test_inference_transform_is_applied(tiny_dataset, trained):
    _, final, _ = trained
    seen = list()

    def blackout(image, position, entry):
        seen.append(position)
        return np.zeros_like(image)

    records = run_inference(final, tiny_dataset, Split.TEST, transform=blackout)
    assert seen == list(range(40))
    assert len(set(r.score for r in records)) == 1


def test_misleading_training_requires_pretrain_start(tiny_dataset, trained):
    _, final, _ = trained
    with pytest.raises(CheckpointError):
        misleading_train(tiny_train_config(), tiny_dataset, final)


def test_misleading_stage_inherits_pretrained_networks(tiny_dataset, trained):
    pretrained, _, _ = trained
    cfg = tiny_train_config(epochs_misleading=0)
    ckpt = misleading_train(cfg, tiny_dataset, pretrained)
    assert ckpt.stage == "misleading"
    assert parameter_digest(ckpt.model.d_sub) == parameter_digest(pretrained.model.d_sub)
    assert parameter_digest(ckpt.model.head_sub) == parameter_digest(pretrained.model.head_sub)
    assert torch.equal(ckpt.model.bank.kernels, pretrained.model.bank.kernels)


def test_adaptive_kernels_move_only_in_misleading_stage(trained):
    pretrained, final, _ = trained
    assert torch.equal(pretrained.model.bank.kernels, pretrained.model.bank.init_snapshot)
    assert not torch.equal(final.model.bank.kernels, final.model.bank.init_snapshot)


@pytest.mark.parametrize(
    "overrides",
    [
        dict(ablation=AblationFlags(use_bias_sampling=False)),
        dict(ablation=AblationFlags(use_contrastive=False)),
        dict(ablation=AblationFlags(use_scam=False)),
        dict(preprocess="none"),
        dict(preprocess="dct"),
        dict(preprocess="srm_fixed"),
        dict(final_stream="injected", pair_reals=True),
    ],
)
def test_variants_train(tiny_dataset, overrides):
    cfg = tiny_train_config(**overrides)
    _, final, log = train_pipeline(cfg, tiny_dataset)
    assert final.stage == "misleading"
    assert log.same_subgroup_pairs() == 0
    if not cfg.ablation.use_contrastive:
        assert all(row[3] == 0.0 for row in log.rows)


def test_pretrain_only(tiny_dataset):
    pretrained, final, log = train_pipeline(tiny_train_config(), tiny_dataset, pretrain_only=True)
    assert final is pretrained
    assert not log.pairs
    assert len(log) == _steps_per_epoch(48, 8)


def test_split_checks(tiny_dataset):
    cfg = tiny_train_config()
    with pytest.raises(EmptySplit):
        pretrain_dsub(cfg, tiny_dataset, samples=[])
    reals = [s for s in load_split(tiny_dataset, Split.TRAIN, cfg) if s.label == Label.REAL]
    with pytest.raises(SingleClassSplit):
        pretrain_dsub(cfg, tiny_dataset, samples=reals)


def test_bad_train_config():
    with pytest.raises(BadTrainConfig):
        tiny_train_config(batch_size=1)
    with pytest.raises(BadTrainConfig):
        tiny_train_config(input_size=8)
    with pytest.raises(BadTrainConfig):
        tiny_train_config(preprocess="wavelet")
    with pytest.raises(BadTrainConfig):
        tiny_train_config(final_stream="both")


def test_train_config_dict_round_trip():
    cfg = tiny_train_config(scam_stages=[2, 3], ablation=AblationFlags(use_scam=False))
    assert TrainConfig.from_dict(cfg.to_dict()) == cfg
    assert "lambda_srm" in TrainConfig.field_names()


def test_training_log_file_round_trip(tmp_path, trained):
    _, _, log = trained
    path = str(tmp_path / "train.log.csv")
    log.write(path)
    read = TrainingLog.read(path)
    assert read.rows == log.rows


@pytest.mark.parametrize("group", ["d_sub.", "scam.", "head_sub.", "d_aux.", "head_fused."])
def test_total_loss_gradient_per_network_matches_finite_differences(group):
    cfg = tiny_train_config(dtype="float64", srm_threshold=None)
    model = build_model(cfg)
    rng = np.random.default_rng(7)
    x = to_batch(list(rng.random((2, 16, 16, 3))), torch.float64)
    red_x = to_batch(list(rng.random((1, 16, 16, 3))), torch.float64)
    labels = torch.tensor([1.0, 0.0], dtype=torch.float64)

    def total():
        l_cls, l_con, l_final = misleading_losses(model, x, labels, [0], red_x, cfg.weights)
        return total_misleading_loss(l_cls, l_con, l_final, cfg.weights)

    params = [p for name, p in model.named_parameters() if name.startswith(group)]
    assert params and all(p.requires_grad for p in params)
    model.zero_grad()
    total().backward()

    h = 1e-6
    numeric, exact = list(), list()
    for _ in range(12):
        param = params[int(rng.integers(len(params)))]
        flat = param.detach().view(-1)
        i = int(rng.integers(flat.numel()))
        with torch.no_grad():
            original = flat[i].item()
            flat[i] = original + h
            plus = total().item()
            flat[i] = original - h
            minus = total().item()
            flat[i] = original
        numeric.append((plus - minus) / (2 * h))
        exact.append(param.grad.view(-1)[i].item())
    numeric, exact = np.array(numeric), np.array(exact)
    assert np.linalg.norm(numeric) > 0
    assert np.linalg.norm(exact - numeric) / np.linalg.norm(numeric) < 1e-4
