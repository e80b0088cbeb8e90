import numpy as np
import pytest

from octroi.network import (
    Conv2D,
    Dense,
    Flatten,
    MaxPool2x2,
    MiniVgg,
    ModelConfig,
    ReLU,
    forward,
    load_checkpoint,
    loss_and_grad,
    save_checkpoint,
)
from octroi.optim import sgd_nesterov_step, zero_velocity

EPS = 1e-3
TOL = 1e-3


def rel_err(a, b):
    return np.abs(a - b) / np.maximum(1e-6, np.maximum(np.abs(a), np.abs(b)))


def bce_loss(model, x, y):
    p = forward(model, x)
    pc = np.clip(p, 1e-7, 1 - 1e-7)
    return float(np.mean(-(y * np.log(pc) + (1 - y) * np.log(1 - pc))))


def fd_model_grads(model, x, y):
    """Central finite differences of the BCE loss over every parameter."""
    out = {}
    for name, arr in model.parameters().items():
        g = np.zeros(arr.size, dtype=np.float64)
        flat = arr.reshape(-1)
        for k in range(flat.size):
            orig = flat[k]
            flat[k] = orig + EPS
            hi = bce_loss(model, x, y)
            flat[k] = orig - EPS
            lo = bce_loss(model, x, y)
            flat[k] = orig
            g[k] = (hi - lo) / (2 * EPS)
        out[name] = g.reshape(arr.shape)
    return out


def fd_layer_check(layer, x, rng):
    """FD check of one layer: loss = sum(forward(x) * R), grads wrt x and params."""
    out = layer.forward(x)
    R = rng.normal(size=out.shape)

    def loss():
        return float((layer.forward(x) * R).sum())

    gx = layer.backward(R.astype(x.dtype))
    flat = x.reshape(-1)
    for k in range(flat.size):
        orig = flat[k]
        flat[k] = orig + EPS
        hi = loss()
        flat[k] = orig - EPS
        lo = loss()
        flat[k] = orig
        fd = (hi - lo) / (2 * EPS)
        assert rel_err(gx.reshape(-1)[k], fd).max() < TOL, f"input grad mismatch at {k}"
    layer.forward(x)
    layer.backward(R.astype(x.dtype))
    for name, arr in layer.params().items():
        analytic = layer.grads()[name]
        pflat = arr.reshape(-1)
        for k in range(pflat.size):
            orig = pflat[k]
            pflat[k] = orig + EPS
            hi = loss()
            pflat[k] = orig - EPS
            lo = loss()
            pflat[k] = orig
            fd = (hi - lo) / (2 * EPS)
            assert rel_err(analytic.reshape(-1)[k], fd).max() < TOL, f"{name}[{k}] grad mismatch"


class TestLayerGradients:
    def test_conv2d(self):
        rng = np.random.default_rng(300)
        layer = Conv2D("c", 2, 3, rng, np.float64)
        x = rng.normal(0, 1, size=(2, 2, 5, 4))
        fd_layer_check(layer, x, rng)

    def test_dense(self):
        rng = np.random.default_rng(301)
        layer = Dense("d", 7, 4, rng, np.float64)
        x = rng.normal(0, 1, size=(3, 7))
        fd_layer_check(layer, x, rng)

    def test_relu(self):
        rng = np.random.default_rng(302)
        layer = ReLU()
        # keep inputs away from the kink at 0
        x = rng.uniform(0.1, 1.0, size=(2, 3, 4, 4)) * rng.choice([-1.0, 1.0], size=(2, 3, 4, 4))
        fd_layer_check(layer, x, rng)

    def test_maxpool(self):
        rng = np.random.default_rng(303)
        layer = MaxPool2x2()
        # distinct values with gaps >> eps, so FD never crosses a window max
        x = (rng.permutation(np.arange(144)) * 0.01).reshape(2, 2, 6, 6)
        fd_layer_check(layer, x, rng)

    def test_maxpool_odd_dims_dropped(self):
        rng = np.random.default_rng(304)
        layer = MaxPool2x2()
        x = rng.normal(0, 1, size=(1, 1, 5, 7))
        out = layer.forward(x)
        assert out.shape == (1, 1, 2, 3)
        gx = layer.backward(np.ones_like(out))
        assert gx.shape == x.shape
        assert gx[:, :, 4, :].sum() == 0  # dropped row receives no gradient

    def test_flatten_round_trip(self):
        rng = np.random.default_rng(305)
        layer = Flatten()
        x = rng.normal(size=(2, 3, 4, 5))
        out = layer.forward(x)
        assert out.shape == (2, 60)
        assert np.array_equal(layer.backward(out), x)


class TestFullModelGradient:
    def test_two_conv_block_model_matches_fd(self):
        # Acceptance criterion 4 instance: full model on 8x8 inputs, float64.
        config = ModelConfig(
            input_size=(8, 8), block_channels=(2, 3), convs_per_block=(1, 1), dense_sizes=(4,)
        )
        model = MiniVgg(config, seed=5, dtype=np.float64)
        rng = np.random.default_rng(306)
        x = rng.uniform(0.0, 1.0, size=(4, 8, 8))
        y = np.array([1.0, 0.0, 1.0, 0.0])
        _, analytic = loss_and_grad(model, x, y)
        numeric = fd_model_grads(model, x, y)
        worst = max(rel_err(analytic[name], numeric[name]).max() for name in analytic)
        assert worst < TOL, f"max relative error {worst:.2e}"


class TestForward:
    def test_zero_weights_give_half(self):
        config = ModelConfig(input_size=(8, 8), block_channels=(2,), convs_per_block=(1,), dense_sizes=(3,))
        model = MiniVgg(config, seed=0)
        for arr in model.parameters().values():
            arr[...] = 0
        rng = np.random.default_rng(307)
        p = forward(model, rng.uniform(0, 1, size=(5, 8, 8)))
        assert np.all(p == 0.5)

    def test_batch_independence(self):
        config = ModelConfig(input_size=(16, 16), block_channels=(4, 8), convs_per_block=(1, 1), dense_sizes=(8,))
        model = MiniVgg(config, seed=1)
        rng = np.random.default_rng(308)
        batch = rng.uniform(0, 1, size=(8, 16, 16)).astype(np.float32)
        p_batch = forward(model, batch)
        p_single = forward(model, batch[3:4])
        assert abs(p_batch[3] - p_single[0]) < 1e-6

    def test_deterministic_init_and_forward(self):
        config = ModelConfig(input_size=(8, 8), block_channels=(3,), convs_per_block=(2,), dense_sizes=(4,))
        a = MiniVgg(config, seed=9)
        b = MiniVgg(config, seed=9)
        for (na, pa), (nb, pb) in zip(a.parameters().items(), b.parameters().items()):
            assert na == nb
            assert np.array_equal(pa, pb)
        x = np.linspace(0, 1, 64, dtype=np.float32).reshape(1, 8, 8)
        assert forward(a, x) == forward(b, x)

    def test_shape_mismatch_error(self):
        config = ModelConfig(input_size=(8, 8), block_channels=(2,), convs_per_block=(1,), dense_sizes=(2,))
        model = MiniVgg(config, seed=0)
        with pytest.raises(ValueError, match=r"\(8, 8\)"):
            forward(model, np.zeros((1, 10, 10), dtype=np.float32))


class TestLoss:
    def test_half_probability_gives_ln2(self):
        config = ModelConfig(input_size=(8, 8), block_channels=(2,), convs_per_block=(1,), dense_sizes=(2,))
        model = MiniVgg(config, seed=0)
        for arr in model.parameters().values():
            arr[...] = 0
        loss, _ = loss_and_grad(model, np.zeros((4, 8, 8), np.float32), np.array([1.0, 0, 1, 0]))
        assert loss == pytest.approx(np.log(2), abs=1e-12)

    def test_saturated_correct_prediction_loss_tiny(self):
        config = ModelConfig(input_size=(8, 8), block_channels=(2,), convs_per_block=(1,), dense_sizes=(2,))
        model = MiniVgg(config, seed=0)
        for arr in model.parameters().values():
            arr[...] = 0
        model.parameters()["output.b"][...] = 40.0  # p ~ 1 exactly after clamping
        loss, _ = loss_and_grad(model, np.zeros((2, 8, 8), np.float32), np.array([1.0, 1.0]))
        assert loss <= -np.log(1 - 1e-7) + 1e-12

    def test_bad_labels_rejected(self):
        config = ModelConfig(input_size=(8, 8), block_channels=(2,), convs_per_block=(1,), dense_sizes=(2,))
        model = MiniVgg(config, seed=0)
        with pytest.raises(ValueError, match="labels"):
            loss_and_grad(model, np.zeros((2, 8, 8), np.float32), np.array([2.0, 0.0]))


class TestOptimizer:
    def test_worked_example(self):
        # v' = 0.9*0 + 0.5 = 0.5; theta' = 1.0 - 0.1*(0.5 + 0.9*0.5) = 0.905
        params = {"w": np.array([1.0])}
        grads = {"w": np.array([0.5])}
        velocity = {"w": np.array([0.0])}
        sgd_nesterov_step(params, grads, velocity, lr=0.1, momentum=0.9)
        assert velocity["w"][0] == pytest.approx(0.5, abs=1e-15)
        assert params["w"][0] == pytest.approx(0.905, abs=1e-15)

    def test_zero_gradient_is_noop(self):
        params = {"w": np.arange(4.0)}
        grads = {"w": np.zeros(4)}
        velocity = zero_velocity(params)
        sgd_nesterov_step(params, grads, velocity, lr=0.1, momentum=0.9)
        assert np.array_equal(params["w"], np.arange(4.0))

    def test_zero_momentum_is_plain_sgd(self):
        rng = np.random.default_rng(309)
        theta = rng.normal(size=(3, 4))
        g = rng.normal(size=(3, 4))
        params = {"w": theta.copy()}
        velocity = zero_velocity(params)
        sgd_nesterov_step(params, {"w": g}, velocity, lr=0.05, momentum=0.0)
        np.testing.assert_allclose(params["w"], theta - 0.05 * g, atol=1e-15)

    def test_shape_mismatch_rejected(self):
        params = {"w": np.zeros(3)}
        with pytest.raises(ValueError, match="shape"):
            sgd_nesterov_step(params, {"w": np.zeros(4)}, zero_velocity(params), 0.1, 0.9)


class TestCheckpoint:
    CONFIG = ModelConfig(input_size=(8, 8), block_channels=(2, 3), convs_per_block=(1, 1), dense_sizes=(4,))

    def test_round_trip_bit_exact(self, tmp_path):
        model = MiniVgg(self.CONFIG, seed=3)
        save_checkpoint(model, tmp_path / "ckpt")
        restored = load_checkpoint(tmp_path / "ckpt")
        for name, arr in model.parameters().items():
            assert np.array_equal(arr, restored.parameters()[name])
        x = np.linspace(0, 1, 64, dtype=np.float32).reshape(1, 8, 8)
        assert forward(model, x)[0] == forward(restored, x)[0]

    def test_truncated_blob_rejected(self, tmp_path):
        model = MiniVgg(self.CONFIG, seed=3)
        save_checkpoint(model, tmp_path / "ckpt")
        blob = (tmp_path / "ckpt" / "model.bin").read_bytes()
        (tmp_path / "ckpt" / "model.bin").write_bytes(blob[:-8])
        with pytest.raises(ValueError, match="truncated"):
            load_checkpoint(tmp_path / "ckpt")

    def test_unknown_version_rejected(self, tmp_path):
        import json

        model = MiniVgg(self.CONFIG, seed=3)
        save_checkpoint(model, tmp_path / "ckpt")
        header_path = tmp_path / "ckpt" / "model.json"
        header = json.loads(header_path.read_text())
        header["format_version"] = 99
        header_path.write_text(json.dumps(header))
        with pytest.raises(ValueError, match="format_version"):
            load_checkpoint(tmp_path / "ckpt")

    def test_tampered_shape_rejected(self, tmp_path):
        import json

        model = MiniVgg(self.CONFIG, seed=3)
        save_checkpoint(model, tmp_path / "ckpt")
        header_path = tmp_path / "ckpt" / "model.json"
        header = json.loads(header_path.read_text())
        header["params"][0]["shape"] = [9, 9, 9, 9]
        header_path.write_text(json.dumps(header))
        with pytest.raises(ValueError, match="shape"):
            load_checkpoint(tmp_path / "ckpt")


class TestModelConfig:
    def test_mismatched_blocks_rejected(self):
        with pytest.raises(ValueError, match="same length"):
            ModelConfig(block_channels=(8, 16), convs_per_block=(2,)).validate()

    def test_too_small_input_rejected(self):
        config = ModelConfig(input_size=(4, 4), block_channels=(2, 2, 2), convs_per_block=(1, 1, 1))
        with pytest.raises(ValueError, match="too small"):
            MiniVgg(config, seed=0)
