import numpy as np
import pytest
from hypothesis import given, strategies as st

from hemopipe.augment import (
    AugmentationPolicy,
    cnn_augment,
    cnn_policy,
    mosaic,
    random_hflip,
    random_rotate,
    random_scale,
    rng_for,
    yolo_policy,
)


def constant(color, size=32):
    return np.full((size, size, 3), color, dtype=np.uint8)


def random_img(seed, size=32):
    return np.random.default_rng(seed).integers(0, 256, size=(size, size, 3), dtype=np.uint8)


def test_policy_validation():
    with pytest.raises(ValueError):
        AugmentationPolicy(regime="GAN", mosaic_p=0, max_rotate_deg=0, hflip_p=0,
                           scale_frac=0, zoom_frac=0, seed=0)
    with pytest.raises(ValueError):
        AugmentationPolicy(regime="YOLO", mosaic_p=1.5, max_rotate_deg=0, hflip_p=0,
                           scale_frac=0, zoom_frac=0, seed=0)
    with pytest.raises(ValueError):
        AugmentationPolicy(regime="CNN", mosaic_p=0, max_rotate_deg=200, hflip_p=0,
                           scale_frac=0, zoom_frac=0, seed=0)


def test_regime_defaults():
    y = yolo_policy(seed=1)
    assert (y.mosaic_p, y.max_rotate_deg, y.hflip_p, y.scale_frac) == (1.0, 45.0, 0.5, 0.5)
    c = cnn_policy(seed=1)
    assert c.mosaic_p == 0.0 and c.zoom_frac == 0.2


def test_rng_keying():
    a = rng_for(7, epoch=1, index=3).uniform(size=4)
    b = rng_for(7, epoch=1, index=3).uniform(size=4)
    c = rng_for(7, epoch=2, index=3).uniform(size=4)
    d = rng_for(7, epoch=1, index=4).uniform(size=4)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    assert not np.array_equal(a, d)


def test_mosaic_of_identical_constants_is_constant():
    imgs = [constant((40, 90, 200))] * 4
    out = mosaic(imgs, rng_for(0, 0, 0), out_size=(32, 32))
    assert out.shape == (32, 32, 3)
    assert (out == np.array([40, 90, 200], dtype=np.uint8)).all()


def test_mosaic_quadrants_with_pinned_center():
    colors = [(255, 0, 0), (0, 255, 0), (0, 0, 255), (255, 255, 0)]
    out = mosaic([constant(c) for c in colors], rng_for(0, 0, 0),
                 out_size=(32, 32), center=(16, 16))
    quads = [out[:16, :16], out[:16, 16:], out[16:, :16], out[16:, 16:]]
    for quad, color in zip(quads, colors):
        assert np.array_equal(quad.reshape(-1, 3).mean(axis=0), np.array(color, dtype=float))


def test_mosaic_seeded_determinism():
    imgs = [random_img(i) for i in range(4)]
    out1 = mosaic(imgs, rng_for(9, 1, 2), out_size=(32, 32))
    out2 = mosaic(imgs, rng_for(9, 1, 2), out_size=(32, 32))
    assert np.array_equal(out1, out2)


def test_mosaic_requires_four_images():
    with pytest.raises(ValueError):
        mosaic([constant((1, 1, 1))] * 3, rng_for(0, 0, 0), out_size=(32, 32))


def test_rotate_zero_degrees_is_identity():
    img = random_img(3)
    assert np.array_equal(random_rotate(img, 0.0, rng_for(0, 0, 0)), img)


def test_rotate_constant_image_constant_within_fill():
    color = np.array([200, 50, 100], dtype=np.uint8)
    img = np.full((40, 40, 3), color, dtype=np.uint8)
    out = random_rotate(img, 45.0, rng_for(1, 0, 0))
    # every pixel is a blend of the constant and the black fill
    assert (out <= color).all()
    center = out[15:25, 15:25]
    assert (center == color).all()


def test_rotate_seeded_determinism():
    img = random_img(5)
    a = random_rotate(img, 45.0, rng_for(2, 3, 4))
    b = random_rotate(img, 45.0, rng_for(2, 3, 4))
    assert np.array_equal(a, b)


def test_hflip_zero_probability_is_identity():
    img = random_img(6)
    assert np.array_equal(random_hflip(img, 0.0, rng_for(0, 0, 0)), img)


def test_hflip_is_involution():
    img = random_img(7)
    flipped = random_hflip(img, 1.0, rng_for(0, 0, 0))
    assert np.array_equal(random_hflip(flipped, 1.0, rng_for(0, 0, 1)), img)
    assert not np.array_equal(flipped, img)


def test_hflip_monte_carlo_frequency():
    img = np.zeros((2, 2, 3), dtype=np.uint8)
    img[0, 0] = 255  # marker pixel to detect the flip
    flips = 0
    for i in range(10_000):
        out = random_hflip(img, 0.5, rng_for(123, 0, i))
        flips += int(out[0, 1, 0] == 255)
    # binomial 3-sigma bound around 0.5 is +/-0.015
    assert 0.48 <= flips / 10_000 <= 0.52


def test_scale_zero_fraction_is_identity():
    img = random_img(8)
    assert np.array_equal(random_scale(img, 0.0, rng_for(0, 0, 0)), img)


@given(seed=st.integers(min_value=0, max_value=2**32 - 1))
def test_scale_preserves_canvas_dims(seed):
    img = random_img(seed % 100, size=24)
    out = random_scale(img, 0.5, rng_for(seed, 0, 0))
    assert out.shape == img.shape
    assert out.dtype == np.uint8


def test_scale_seeded_determinism():
    img = random_img(9)
    a = random_scale(img, 0.5, rng_for(4, 5, 6))
    b = random_scale(img, 0.5, rng_for(4, 5, 6))
    assert np.array_equal(a, b)


def test_cnn_augment_zero_magnitudes_is_identity():
    policy = AugmentationPolicy(regime="CNN", mosaic_p=0.0, max_rotate_deg=0.0,
                                hflip_p=0.0, scale_frac=0.0, zoom_frac=0.0, seed=0)
    img = random_img(10)
    assert np.array_equal(cnn_augment(img, policy, rng_for(0, 0, 0)), img)


@given(seed=st.integers(min_value=0, max_value=2**32 - 1))
def test_cnn_augment_dims_and_range(seed):
    img = random_img(seed % 50, size=28)
    out = cnn_augment(img, cnn_policy(seed=3), rng_for(seed, 1, 2))
    assert out.shape == img.shape
    assert out.dtype == np.uint8  # uint8 keeps values in [0, 255] by construction


def test_cnn_augment_seeded_determinism():
    img = random_img(11)
    policy = cnn_policy(seed=3)
    a = cnn_augment(img, policy, rng_for(12, 1, 0))
    b = cnn_augment(img, policy, rng_for(12, 1, 0))
    assert np.array_equal(a, b)
