import pytest
import torch

from fairmislead.nets.backbone import (
    Backbone,
    BackboneConfig,
    ShapeMismatch,
    StageIndexOutOfRange,
    build_e_red,
    extract_red_features,
)
from fairmislead.nets.scam import (
    ConcatFuse,
    ScamBlock,
    ScamStage,
    channel_attention,
    enhance,
    fuse_hybrid,
    scam_forward,
)


def _stage(channels=8, seed=0, dtype=torch.float64):
    torch.manual_seed(seed)
    return ScamStage(channels).to(dtype)


def test_attention_is_strictly_inside_unit_interval():
    stage = _stage(dtype=torch.float32)
    generator = torch.Generator().manual_seed(0)
    for _ in range(1000):
        v_sub = torch.randn(1, 8, 4, 4, generator=generator)
        sc = channel_attention(stage, v_sub)
        assert tuple(sc.shape) == (1, 8, 1, 1)
        assert bool(((sc > 0) & (sc < 1)).all())


def test_attention_ignores_spatial_arrangement():
    stage = _stage()
    generator = torch.Generator().manual_seed(1)
    v_sub = torch.randn(3, 8, 5, 4, generator=generator, dtype=torch.float64)
    order = torch.randperm(20, generator=generator)
    shuffled = v_sub.flatten(2)[:, :, order].reshape(v_sub.shape)
    assert not torch.equal(shuffled, v_sub)
    assert torch.allclose(
        channel_attention(stage, shuffled), channel_attention(stage, v_sub), rtol=0, atol=1e-12
    )


def test_zero_attention_leaves_features_unchanged():
    v_sub = torch.randn(2, 8, 4, 4, dtype=torch.float64)
    assert torch.equal(enhance(v_sub, torch.zeros(2, 8, 1, 1, dtype=torch.float64)), v_sub)


def test_enhance_rejects_non_broadcasting_attention():
    with pytest.raises(ShapeMismatch):
        enhance(torch.randn(2, 8, 4, 4), torch.rand(2, 4, 1, 1))


def test_scam_forward_is_the_three_step_composition():
    stage = _stage()
    v_red = torch.randn(2, 8, 4, 4, dtype=torch.float64)
    v_sub = torch.randn(2, 8, 4, 4, dtype=torch.float64)
    sc = torch.sigmoid(
        stage.transform(stage.avg_pool(v_sub)) + stage.transform(stage.max_pool(v_sub))
    )
    v_sc = v_sub + sc * v_sub
    manual = stage.fuse_conv(torch.cat([v_red, v_sc], dim=1))
    assert torch.equal(scam_forward(stage, v_red, v_sub), manual)
    assert torch.equal(stage(v_red, v_sub), manual)


def test_fusion_starts_close_to_the_enhanced_stream():
    stage = _stage()
    v_sc = torch.randn(2, 8, 4, 4, dtype=torch.float64)
    v_aug = fuse_hybrid(stage, torch.zeros_like(v_sc), v_sc)
    assert torch.allclose(v_aug, v_sc, atol=1e-12)


def test_fuse_hybrid_shape_checks():
    stage = _stage()
    with pytest.raises(ShapeMismatch):
        fuse_hybrid(stage, torch.randn(1, 8, 2, 2), torch.randn(1, 8, 4, 4))
    with pytest.raises(ShapeMismatch):
        channel_attention(stage, torch.randn(1, 4, 4, 4))


def test_attention_gradients_match_finite_differences():
    stage = _stage(channels=4, seed=3)
    v_red = torch.randn(2, 4, 3, 3, dtype=torch.float64)
    v_sub = torch.randn(2, 4, 3, 3, dtype=torch.float64)
    params = tuple(p for p in stage.transform.parameters())

    def fn(*weights):
        first, second = weights
        hidden = torch.relu(torch.nn.functional.conv2d(v_sub.mean((2, 3), keepdim=True), first))
        hidden_max = torch.relu(
            torch.nn.functional.conv2d(v_sub.amax((2, 3), keepdim=True), first)
        )
        sc = torch.sigmoid(
            torch.nn.functional.conv2d(hidden, second)
            + torch.nn.functional.conv2d(hidden_max, second)
        )
        return fuse_hybrid(stage, v_red, enhance(v_sub, sc))

    weights = tuple(p.detach().clone().requires_grad_(True) for p in params)
    assert torch.allclose(fn(*weights), scam_forward(stage, v_red, v_sub))
    assert torch.autograd.gradcheck(fn, weights, eps=1e-6, atol=1e-8, rtol=1e-4)


def test_scam_block_injection_into_backbone():
    cfg = BackboneConfig(stages=4, widths=(4, 8, 8, 16), input_channels=6, feature_dim=5)
    d_sub = Backbone(cfg)
    e_red = build_e_red(cfg)
    block = ScamBlock(cfg.widths, stage_indices=(2, 3), seed=0)
    assert block.indices == (2, 3)
    x = torch.rand(2, 6, 16, 16)
    red = extract_red_features(e_red, torch.rand(2, 3, 16, 16))
    injected = d_sub(x, injected=block.make_injection(red))
    plain = d_sub(x)
    assert injected.final.shape == plain.final.shape
    assert torch.equal(injected.stage_maps[1], plain.stage_maps[1])
    assert not torch.equal(injected.stage_maps[2], plain.stage_maps[2])


def test_scam_block_without_attention_uses_concat_at_last_stage():
    block = ScamBlock((4, 8, 8, 16), stage_indices=(2, 3), use_scam=False)
    assert block.indices == (3,)
    assert isinstance(block.fusers["3"], ConcatFuse)


def test_scam_block_rejects_out_of_range_stage():
    with pytest.raises(StageIndexOutOfRange):
        ScamBlock((4, 8), stage_indices=(2,))
