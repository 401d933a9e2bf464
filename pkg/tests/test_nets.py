import json

import numpy as np
import pytest
import torch

from fairmislead.errors import DataError
from fairmislead.lib.utils import arrays_sha256
from fairmislead.losses import binary_cls_loss
from fairmislead.nets.backbone import (
    Backbone,
    BackboneConfig,
    BadBackboneConfig,
    DimMismatch,
    FrozenExtractorError,
    Head,
    ShapeMismatch,
    StageIndexOutOfRange,
    as_batch,
    build_e_red,
    classify,
    count_parameters,
    extract_red_features,
    forward_daux,
    forward_dsub,
    load_external_weights,
    parameter_digest,
)
from fairmislead.trainer.model import TrainConfig, build_model

CFG = BackboneConfig(stages=3, widths=(4, 8, 8), input_channels=6, feature_dim=5, seed=1)


def test_backbone_shapes():
    net = Backbone(CFG)
    stack = forward_dsub(net, torch.rand(2, 6, 16, 16))
    assert [tuple(m.shape) for m in stack.stage_maps] == [
        (2, 4, 8, 8),
        (2, 8, 4, 4),
        (2, 8, 2, 2),
    ]
    assert tuple(stack.final.shape) == (2, 5)


def test_backbone_is_seeded():
    a, b = Backbone(CFG), Backbone(CFG)
    assert parameter_digest(a) == parameter_digest(b)
    other = Backbone(CFG.with_input(6, seed=2))
    assert parameter_digest(a) != parameter_digest(other)


def test_backbone_construction_leaves_global_rng_alone():
    torch.manual_seed(123)
    expected = torch.rand(3)
    torch.manual_seed(123)
    Backbone(CFG)
    assert torch.equal(torch.rand(3), expected)


def test_backbone_input_checks():
    net = Backbone(CFG)
    with pytest.raises(ShapeMismatch):
        net(torch.rand(1, 3, 16, 16))
    with pytest.raises(ShapeMismatch):
        net(torch.rand(1, 6, 4, 4))
    with pytest.raises(StageIndexOutOfRange):
        net(torch.rand(1, 6, 16, 16), injected={3: lambda v: v})


def test_injection_replaces_stage_map():
    net = Backbone(CFG)
    x = torch.rand(2, 6, 16, 16)
    plain = net(x)
    identity = net(x, injected={1: lambda v: v})
    assert torch.equal(plain.final, identity.final)
    zeroed = net(x, injected={2: torch.zeros_like})
    assert torch.equal(zeroed.stage_maps[2], torch.zeros(2, 8, 2, 2))
    with pytest.raises(ShapeMismatch):
        net(x, injected={1: lambda v: v[:, :2]})


def test_bad_backbone_config():
    with pytest.raises(BadBackboneConfig):
        BackboneConfig(stages=2, widths=(4, 8, 8))
    with pytest.raises(BadBackboneConfig):
        BackboneConfig(stages=1, widths=(0,))


def test_e_red_is_frozen_and_deterministic():
    e_red = build_e_red(CFG)
    assert e_red.frozen
    assert e_red.cfg.input_channels == 3
    assert e_red.cfg.widths == CFG.widths
    assert all(not p.requires_grad for p in e_red.parameters())
    assert parameter_digest(e_red) == parameter_digest(build_e_red(CFG))

    image = np.random.default_rng(0).random((16, 16, 3))
    a = extract_red_features(e_red, image)
    b = extract_red_features(e_red, image)
    assert torch.equal(a.final, b.final)
    assert not a.final.requires_grad
    assert tuple(a.stage_maps[1].shape) == (1, 8, 4, 4)


def test_extract_requires_frozen_extractor():
    with pytest.raises(FrozenExtractorError):
        extract_red_features(Backbone(CFG.with_input(3)), np.zeros((16, 16, 3)))


def test_forward_daux_takes_images():
    d_aux = Backbone(BackboneConfig(stages=2, widths=(4, 8), feature_dim=5))
    stack = forward_daux(d_aux, np.zeros((16, 16, 3), dtype=np.float32))
    assert tuple(stack.final.shape) == (1, 5)


def test_as_batch_layouts():
    assert tuple(as_batch(np.zeros((8, 8, 3))).shape) == (1, 3, 8, 8)
    assert tuple(as_batch(np.zeros((2, 8, 8, 3))).shape) == (2, 3, 8, 8)
    with pytest.raises(ShapeMismatch):
        as_batch(np.zeros(8))


def test_classify():
    head = Head(5, seed=0)
    scores = classify(head, torch.randn(4, 5) * 100)
    assert scores.shape == (4,)
    assert bool(((scores >= 0) & (scores <= 1)).all())
    with pytest.raises(DimMismatch):
        classify(head, torch.randn(4, 6))


def test_auxiliary_discriminator_is_lightweight():
    model = build_model(TrainConfig())
    assert count_parameters(model.d_aux) < 0.1 * count_parameters(model.d_sub)


def test_backbone_outputs_stay_finite():
    net = Backbone(CFG)
    head = Head(CFG.feature_dim, seed=2)
    generator = torch.Generator().manual_seed(0)
    for scale in (1e-3, 1.0, 10.0, 1e3):
        for _ in range(25):
            x = scale * torch.randn(10, 6, 16, 16, generator=generator)
            with torch.no_grad():
                stack = forward_dsub(net, x)
                scores = classify(head, stack.final)
            assert all(bool(torch.isfinite(m).all()) for m in stack.stage_maps)
            assert bool(torch.isfinite(stack.final).all())
            assert bool(torch.isfinite(scores).all())


def test_first_layer_gradient_matches_finite_differences():
    net = Backbone(CFG, dtype=torch.float64)
    head = Head(CFG.feature_dim, seed=2, dtype=torch.float64)
    generator = torch.Generator().manual_seed(1)
    x = torch.rand(3, 6, 16, 16, generator=generator, dtype=torch.float64)
    labels = torch.tensor([1.0, 0.0, 1.0], dtype=torch.float64)

    def loss():
        return binary_cls_loss(classify(head, forward_dsub(net, x).final), labels)

    weight = net.stages[0].conv.weight
    weight.grad = None
    loss().backward()
    analytic = weight.grad.detach().clone()

    h = 1e-6
    numeric = torch.empty_like(analytic)
    flat = weight.detach().view(-1)
    with torch.no_grad():
        for i in range(flat.numel()):
            original = flat[i].item()
            flat[i] = original + h
            plus = loss().item()
            flat[i] = original - h
            minus = loss().item()
            flat[i] = original
            numeric.view(-1)[i] = (plus - minus) / (2 * h)
    assert (analytic - numeric).norm() / numeric.norm() < 1e-5


def test_parameter_digest_tracks_changes():
    net = Backbone(CFG)
    before = parameter_digest(net)
    state = net.state_dict()
    assert before == arrays_sha256((n, state[n].double().numpy()) for n in sorted(state))
    with torch.no_grad():
        net.project.bias.add_(1.0)
    assert parameter_digest(net) != before


def _manifest_for(module, names):
    state = module.state_dict()
    return [{"name": n, "shape": list(state[n].shape)} for n in names]


def test_load_external_weights(tmp_path):
    net = build_e_red(CFG)
    names = ["project.weight", "project.bias"]
    entries = _manifest_for(net, names)
    n = sum(int(np.prod(e["shape"])) for e in entries)
    values = np.arange(n, dtype="<f8") / n
    (tmp_path / "w.bin").write_bytes(values.tobytes())
    (tmp_path / "w.json").write_text(json.dumps({"parameters": entries}))

    load_external_weights(net, str(tmp_path / "w.bin"), str(tmp_path / "w.json"))
    loaded = torch.cat([net.state_dict()[k].flatten().double() for k in names])
    assert np.allclose(loaded.numpy(), values, atol=1e-7)
    assert count_parameters(net) > n


def test_load_external_weights_shape_mismatch(tmp_path):
    net = build_e_red(CFG)
    entries = [{"name": "project.bias", "shape": [7]}]
    (tmp_path / "w.bin").write_bytes(np.zeros(7, dtype="<f8").tobytes())
    (tmp_path / "w.json").write_text(json.dumps(entries))
    with pytest.raises(ShapeMismatch):
        load_external_weights(net, str(tmp_path / "w.bin"), str(tmp_path / "w.json"))

    entries = [{"name": "project.bias", "shape": [5]}]
    (tmp_path / "w.json").write_text(json.dumps(entries))
    with pytest.raises(ShapeMismatch):
        load_external_weights(net, str(tmp_path / "w.bin"), str(tmp_path / "w.json"))
    with pytest.raises(DataError):
        load_external_weights(net, str(tmp_path / "none.bin"), str(tmp_path / "w.json"))
