import numpy as np
import pytest

from fairmislead.lib.imaging import affine, gaussian_blur, jpeg_roundtrip
from fairmislead.trainer.augment import AugmentConfig, BadAugmentConfig, augment_image


def _image(seed=0, size=16):
    return np.random.default_rng(seed).random((size, size, 3)).astype(np.float32)


def test_disabled_is_identity():
    image = _image()
    out = augment_image(image, np.random.default_rng(0), AugmentConfig(enabled=False))
    assert np.array_equal(out, image)


def test_same_seed_same_output():
    image = _image()
    a = augment_image(image, np.random.default_rng(5))
    b = augment_image(image, np.random.default_rng(5))
    assert np.array_equal(a, b)
    assert a.dtype == image.dtype and a.shape == image.shape
    assert a.min() >= 0.0 and a.max() <= 1.0


def test_every_call_consumes_the_same_draws():
    image = _image()
    rng_a, rng_b = np.random.default_rng(1), np.random.default_rng(1)
    augment_image(image, rng_a, AugmentConfig(p=0.0))
    augment_image(image, rng_b, AugmentConfig(p=1.0))
    assert rng_a.random() == rng_b.random()


def test_flip_only():
    image = _image()
    outputs = [
        augment_image(image, np.random.default_rng(s), AugmentConfig(p=0.0)) for s in range(20)
    ]
    for out in outputs:
        assert np.array_equal(out, image) or np.array_equal(out, image[:, ::-1])
    assert any(not np.array_equal(out, image) for out in outputs)


def test_bad_config():
    with pytest.raises(BadAugmentConfig):
        AugmentConfig(p=1.5)
    with pytest.raises(BadAugmentConfig):
        AugmentConfig(min_jpeg_quality=0)
    with pytest.raises(BadAugmentConfig):
        AugmentConfig(jitter=-0.1)


def test_imaging_helpers_keep_shape_and_range():
    image = _image(size=24).astype(np.float64)
    assert np.array_equal(gaussian_blur(image, 0.0), image)
    blurred = gaussian_blur(image, 1.5)
    assert blurred.shape == image.shape
    assert blurred.std() < image.std()
    compressed = jpeg_roundtrip(image, 50)
    assert compressed.shape == image.shape and compressed.min() >= 0.0
    assert np.allclose(affine(image, 0.0, (0.0, 0.0)), image)
