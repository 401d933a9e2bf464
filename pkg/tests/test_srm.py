import json

import numpy as np
import pytest
import torch
import torch.nn.functional as F
from scipy import fft

from conftest import tiny_train_config
from fairmislead.losses import total_misleading_loss
from fairmislead.srm.srm import (
    BadChannelCount,
    BadPreprocessMode,
    ImageTooSmall,
    NonFiniteGradient,
    Preprocessor,
    apply_dct_preprocess,
    apply_residual_filter,
    build_preprocessor,
    init_kernel_bank,
    load_kernel_bank,
    restore_from_snapshot,
    save_kernel_bank,
    srm_base_kernels,
    update_kernels,
)
from fairmislead.trainer.model import build_model
from fairmislead.trainer.trainer import misleading_losses, to_batch


def test_base_kernels_are_zero_sum():
    base = srm_base_kernels()
    assert base.shape == (3, 5, 5)
    assert np.allclose(base.sum(axis=(1, 2)), 0.0, atol=1e-15)


def test_init_kernel_bank_tiling():
    bank = init_kernel_bank()
    assert tuple(bank.kernels.shape) == (30, 3, 5, 5)
    assert bank.kernels.dtype == torch.float64
    base = torch.as_tensor(srm_base_kernels())
    for o in range(30):
        for c in range(3):
            assert torch.equal(bank.kernels[o, c], base[o % 3])
    assert torch.equal(bank.kernels, bank.init_snapshot)


def test_init_kernel_bank_rejects_bad_channel_counts():
    with pytest.raises(BadChannelCount):
        init_kernel_bank(c_out=10)
    with pytest.raises(BadChannelCount):
        init_kernel_bank(c_out=0)


@pytest.mark.parametrize("value", [0.0, 0.25, 0.5, 1.0])
def test_constant_image_has_zero_response(value):
    bank = init_kernel_bank()
    residual = apply_residual_filter(bank, np.full((32, 32, 3), value))
    assert residual.shape == (32, 32, 30)
    assert np.all(residual == 0.0)


def _drifted_bank(seed=0):
    bank = init_kernel_bank(c_out=6, threshold=None)
    generator = torch.Generator().manual_seed(seed)
    grad = torch.randn(bank.kernels.shape, generator=generator, dtype=torch.float64)
    return update_kernels(bank, grad, lam=0.05)


def test_residual_filter_is_a_plain_cross_correlation():
    bank = _drifted_bank()
    image = np.random.default_rng(1).random((16, 16, 3))
    x = torch.as_tensor(image).permute(2, 0, 1).unsqueeze(0)
    padded = F.pad(x, (2, 2, 2, 2), mode="reflect")
    with torch.no_grad():
        expected = F.conv2d(padded, bank.kernels)[0].permute(1, 2, 0).numpy()
    assert np.allclose(apply_residual_filter(bank, image), expected, rtol=0, atol=1e-12)


def test_residual_filter_impulse_response_is_the_kernel():
    bank = _drifted_bank(2)
    kernels = bank.kernels.detach().numpy()
    for channel in range(3):
        image = np.zeros((16, 16, 3))
        image[8, 8, channel] = 1.0
        residual = apply_residual_filter(bank, image)
        # cross-correlation: output at (8 + 2 - i, 8 + 2 - j) picks tap (i, j)
        window = residual[6:11, 6:11, :][::-1, ::-1, :].transpose(2, 0, 1)
        assert np.allclose(window, kernels[:, channel], rtol=0, atol=1e-12)
        outside = residual.copy()
        outside[6:11, 6:11, :] = 0.0
        assert np.all(outside == 0.0)


def test_residual_filter_is_linear():
    bank = _drifted_bank(3)
    rng = np.random.default_rng(4)
    a, b = rng.random((16, 16, 3)), rng.random((16, 16, 3))
    fa, fb = apply_residual_filter(bank, a), apply_residual_filter(bank, b)
    assert np.allclose(apply_residual_filter(bank, 0.37 * a), 0.37 * fa, rtol=0, atol=1e-10)
    assert np.allclose(apply_residual_filter(bank, a + b), fa + fb, rtol=0, atol=1e-10)


def test_residual_filter_is_clamped_and_too_small_rejected():
    bank = init_kernel_bank(threshold=0.01)
    image = np.random.default_rng(0).random((16, 16, 3))
    residual = apply_residual_filter(bank, image)
    assert np.abs(residual).max() <= 0.01
    with pytest.raises(ImageTooSmall):
        apply_residual_filter(bank, np.zeros((4, 4, 3)))


def test_update_with_zero_lambda_is_identity():
    bank = init_kernel_bank()
    before = bank.kernels.detach().clone()
    grad = torch.randn(bank.kernels.shape, dtype=torch.float64)
    update_kernels(bank, grad, lam=0.0)
    assert torch.equal(bank.kernels, before)


def test_update_rule_and_snapshot():
    bank = init_kernel_bank(lam=1e-3)
    before = bank.kernels.detach().clone()
    grad = torch.randn(bank.kernels.shape, dtype=torch.float64)
    update_kernels(bank, grad)
    assert torch.equal(bank.kernels, before - 1e-3 * grad)
    assert torch.equal(bank.init_snapshot, before)
    restore_from_snapshot(bank)
    assert torch.equal(bank.kernels, before)


def test_update_rejects_bad_gradients():
    bank = init_kernel_bank()
    grad = torch.zeros(bank.kernels.shape, dtype=torch.float64)
    grad[0, 0, 0, 0] = float("nan")
    with pytest.raises(NonFiniteGradient):
        update_kernels(bank, grad, lam=1e-4)
    with pytest.raises(BadChannelCount):
        update_kernels(bank, torch.zeros(3, 3, 5, 5), lam=1e-4)


def test_total_loss_gradient_matches_finite_differences():
    cfg = tiny_train_config(dtype="float64", srm_threshold=None)
    model = build_model(cfg)
    rng = np.random.default_rng(0)
    x = to_batch(list(rng.random((2, 16, 16, 3))), torch.float64)
    red_x = to_batch(list(rng.random((1, 16, 16, 3))), torch.float64)
    labels = torch.tensor([1.0, 0.0], dtype=torch.float64)

    def total():
        l_cls, l_con, l_final = misleading_losses(model, x, labels, [0], red_x, cfg.weights)
        return total_misleading_loss(l_cls, l_con, l_final, cfg.weights)

    kernels = model.bank.kernels
    kernels.grad = None
    total().backward()
    analytic = kernels.grad.detach().clone()

    flat_index = rng.choice(kernels.numel(), size=20, replace=False)
    h = 1e-6
    numeric, exact = list(), list()
    for i in flat_index:
        index = np.unravel_index(i, tuple(kernels.shape))
        with torch.no_grad():
            original = kernels[index].item()
            kernels[index] = original + h
            plus = total().item()
            kernels[index] = original - h
            minus = total().item()
            kernels[index] = original
        numeric.append((plus - minus) / (2 * h))
        exact.append(analytic[index].item())
    numeric, exact = np.array(numeric), np.array(exact)
    assert np.linalg.norm(exact - numeric) / np.linalg.norm(numeric) < 1e-4


def _dct_per_block(image):
    out = np.empty_like(image)
    for top in range(0, image.shape[0], 8):
        for left in range(0, image.shape[1], 8):
            block = image[top : top + 8, left : left + 8]
            c = fft.dctn(block, norm="ortho", axes=(0, 1))
            rows, cols = block.shape[:2]
            u, v = np.meshgrid(np.arange(rows), np.arange(cols), indexing="ij")
            c[(u + v) <= 2] = 0.0
            out[top : top + rows, left : left + cols] = fft.idctn(c, norm="ortho", axes=(0, 1))
    return out


@pytest.mark.parametrize("size", [8, 16, 20])
def test_dct_preprocess_matches_per_block_oracle(size):
    image = np.random.default_rng(size).random((size, size, 3))
    out = apply_dct_preprocess(image)
    assert out.shape == image.shape
    assert np.allclose(out, _dct_per_block(image), atol=1e-12)


def test_dct_preprocess_removes_flat_content():
    assert np.allclose(apply_dct_preprocess(np.full((16, 16, 3), 0.7)), 0.0, atol=1e-12)
    with pytest.raises(ImageTooSmall):
        apply_dct_preprocess(np.zeros((7, 7, 3)))


def test_dct_preprocess_is_idempotent():
    image = np.random.default_rng(5).random((20, 24, 3))
    once = apply_dct_preprocess(image)
    assert np.abs(apply_dct_preprocess(once) - once).max() < 1e-6


def test_dct_preprocess_keeps_high_frequency_checkerboard():
    coeffs = np.zeros((8, 8))
    coeffs[7, 7] = 1.0
    block = fft.idctn(coeffs, norm="ortho")
    # the highest DCT basis: an alternating sign pattern in both directions
    signs = np.sign(block)
    assert np.all(signs[1:, :] == -signs[:-1, :]) and np.all(signs[:, 1:] == -signs[:, :-1])
    image = np.repeat(np.tile(block, (2, 2))[:, :, None], 3, axis=2)
    assert np.abs(apply_dct_preprocess(image) - image).max() < 1e-6

    # a plain +-1 checkerboard only loses its small (1, 1) component
    board = np.indices((16, 16)).sum(axis=0) % 2 * 2.0 - 1.0
    board = np.repeat(board[:, :, None], 3, axis=2)
    out = apply_dct_preprocess(board)
    assert np.linalg.norm(out - board) / np.linalg.norm(board) < 0.05


def test_preprocessor_modes():
    x = torch.rand(2, 3, 16, 16)
    none = build_preprocessor("none")
    assert none.out_channels == 3 and not none.adaptive
    assert torch.equal(none(x), x)

    fixed = build_preprocessor("srm_fixed", c_out=6)
    assert fixed.out_channels == 6 and not fixed.adaptive
    assert not fixed.bank.kernels.requires_grad

    adaptive = build_preprocessor("astray_srm", c_out=6)
    assert adaptive.adaptive and adaptive.bank.kernels.requires_grad
    assert adaptive(x).shape == (2, 6, 16, 16)

    dct = build_preprocessor("dct")
    out = dct(x)
    assert out.shape == x.shape and out.dtype == x.dtype

    with pytest.raises(BadPreprocessMode):
        build_preprocessor("wavelet")
    with pytest.raises(BadPreprocessMode):
        Preprocessor("astray_srm")


def test_kernel_bank_file_round_trip(tmp_path):
    bank = init_kernel_bank(c_out=6, lam=2e-4, threshold=None)
    update_kernels(bank, torch.randn(bank.kernels.shape, dtype=torch.float64), lam=0.1)
    bin_path, json_path = save_kernel_bank(bank, str(tmp_path / "bank"))
    assert bin_path.endswith("bank.bin") and json_path.endswith("bank.json")
    with open(json_path) as r:
        meta = json.load(r)
    assert meta["shape"] == [6, 3, 5, 5]
    assert meta["lambda"] == 2e-4 and meta["threshold"] is None

    loaded = load_kernel_bank(str(tmp_path / "bank.bin"))
    assert torch.equal(loaded.kernels, bank.kernels)
    assert loaded.lam == bank.lam
    assert torch.equal(loaded.init_snapshot, init_kernel_bank(c_out=6).init_snapshot)
