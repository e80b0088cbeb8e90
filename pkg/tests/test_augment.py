import numpy as np
import pytest

from octroi.augment import AugmentConfig, augment, rotate, shift, zoom


class ScriptedRng:
    """Deterministic stand-in: uniform() returns the range top, random() a fixed value."""

    def __init__(self, random_value=0.9, uniform_pick="hi"):
        self.random_value = random_value
        self.uniform_pick = uniform_pick

    def uniform(self, lo, hi):
        return hi if self.uniform_pick == "hi" else lo

    def random(self):
        return self.random_value


IDENTITY = AugmentConfig(
    rotation_degrees=(0.0, 0.0),
    horizontal_flip=False,
    brightness_factor=(1.0, 1.0),
    shift_fraction=0.0,
    zoom_factor=(1.0, 1.0),
)


class TestTransforms:
    def test_shift_vacates_exact_zeros(self):
        img = np.full((100, 100), 50.0)
        out = shift(img, 0, 5)
        assert np.all(out[:, :5] == 0.0)
        assert np.all(out[:, 5:] == 50.0)

    def test_shift_negative(self):
        img = np.arange(12.0).reshape(3, 4)
        out = shift(img, -1, 0)
        assert np.array_equal(out[:2], img[1:])
        assert np.all(out[2] == 0.0)

    def test_rotate_zero_is_identity(self):
        rng = np.random.default_rng(0)
        img = rng.uniform(0, 255, size=(21, 33))
        np.testing.assert_allclose(rotate(img, 0.0), img, atol=1e-9)

    def test_rotate_90_of_symmetric_disk(self):
        # a centred disk is invariant under rotation
        size = 41
        rows, cols = np.mgrid[:size, :size] - size // 2
        img = ((rows**2 + cols**2) <= 100).astype(float) * 200
        np.testing.assert_allclose(rotate(img, 90.0), img, atol=1e-6)

    def test_zoom_one_is_identity(self):
        rng = np.random.default_rng(1)
        img = rng.uniform(0, 255, size=(16, 16))
        np.testing.assert_allclose(zoom(img, 1.0), img, atol=1e-9)

    def test_zoom_out_pads_border_with_zeros(self):
        img = np.full((20, 20), 100.0)
        out = zoom(img, 0.5)
        assert out[0, 0] == 0.0
        assert out[10, 10] == 100.0

    def test_zoom_in_crops(self):
        img = np.zeros((21, 21))
        img[10, 10] = 80.0
        out = zoom(img, 2.0)
        assert out[10, 10] == 80.0  # center fixed point


class TestAugment:
    def test_disabled_is_identity(self):
        rng = np.random.default_rng(2)
        img = rng.integers(0, 256, size=(16, 16)).astype(np.float64)
        config = AugmentConfig(enabled=False)
        out = augment(img, config, rng)
        assert np.array_equal(out, img)

    def test_forced_brightness(self):
        import dataclasses

        config = dataclasses.replace(IDENTITY, brightness_factor=(1.2, 1.2))
        img = np.full((10, 10), 100.0)
        out = augment(img, config, ScriptedRng())
        assert np.all(out == pytest.approx(120.0))

    def test_brightness_clamped(self):
        import dataclasses

        config = dataclasses.replace(IDENTITY, brightness_factor=(3.0, 3.0))
        img = np.full((4, 4), 100.0)
        out = augment(img, config, ScriptedRng())
        assert np.all(out == 255.0)

    def test_forced_shift_five_percent(self):
        import dataclasses

        config = dataclasses.replace(IDENTITY, shift_fraction=0.05)
        img = np.full((100, 100), 60.0)
        out = augment(img, config, ScriptedRng(uniform_pick="hi"))
        # +5% on both axes: 5 vacated rows and columns, exactly 0
        assert np.all(out[:5, :] == 0.0)
        assert np.all(out[:, :5] == 0.0)
        assert np.all(out[5:, 5:] == 60.0)

    def test_preserves_shape(self):
        rng = np.random.default_rng(3)
        img = rng.integers(0, 256, size=(48, 64)).astype(np.float64)
        config = AugmentConfig()
        for _ in range(10):
            out = augment(img, config, rng)
            assert out.shape == img.shape

    def test_deterministic_given_rng_state(self):
        img = np.random.default_rng(4).integers(0, 256, size=(32, 32)).astype(np.float64)
        config = AugmentConfig()
        a = augment(img, config, np.random.default_rng(11))
        b = augment(img, config, np.random.default_rng(11))
        assert np.array_equal(a, b)

    def test_flip_draw(self):
        import dataclasses

        config = dataclasses.replace(IDENTITY, horizontal_flip=True)
        img = np.zeros((4, 4))
        img[:, 0] = 9.0
        out = augment(img, config, ScriptedRng(random_value=0.1))  # < 0.5: flip
        assert np.all(out[:, -1] == 9.0)
        out = augment(img, config, ScriptedRng(random_value=0.9))  # no flip
        assert np.all(out[:, 0] == 9.0)

    def test_invalid_config(self):
        with pytest.raises(ValueError, match="shift_fraction"):
            AugmentConfig(shift_fraction=0.7).validate()
        with pytest.raises(ValueError, match="range is empty"):
            AugmentConfig(zoom_factor=(1.2, 0.9)).validate()
