import numpy as np
import pytest

from producescan.errors import InvalidArgumentError
from producescan.models import build_micro_mobilenet, forward, run_layers
from producescan.tensor import (
    ConvKernel,
    Tensor,
    conv2d,
    depthwise_conv2d,
    global_avg_pool,
    pointwise_conv2d,
    relu,
)
from producescan.training import (
    FeatureSet,
    TrainConfig,
    attach_head,
    extract_features,
    head_loss_and_grad,
    train_head,
)


def random_images(n, seed=0):
    rng = np.random.default_rng(seed)
    return [Tensor(rng.uniform(-1, 1, size=(32, 32, 3)).astype(np.float32)) for _ in range(n)]


def toy_features(seed=0, per_class=20, classes=3, dims=5, spread=4.0):
    """Well-separated Gaussian-ish blobs, one per class."""
    rng = np.random.default_rng(seed)
    rows, labels = [], []
    centers = rng.normal(0, spread, size=(classes, dims))
    for k in range(classes):
        rows.append(centers[k] + rng.normal(0, 0.3, size=(per_class, dims)))
        labels.extend([k] * per_class)
    return FeatureSet(np.concatenate(rows), labels, tuple(f"c{k}" for k in range(classes)))


class TestFeatureSet:
    def test_rejects_empty(self):
        with pytest.raises(InvalidArgumentError):
            FeatureSet(np.zeros((0, 4)), [], ("a",))

    def test_rejects_label_out_of_range(self):
        with pytest.raises(InvalidArgumentError):
            FeatureSet(np.zeros((2, 4)), [0, 2], ("a", "b"))

    def test_empty_slice_rejected(self):
        fs = toy_features()
        with pytest.raises(InvalidArgumentError, match="empty"):
            fs.slice([])


class TestExtractFeatures:
    def test_one_row_per_image(self):
        model = build_micro_mobilenet(4, 1)
        images = random_images(5)
        fs = extract_features(model, images, [0, 1, 2, 3, 0])
        assert fs.features.shape == (5, 64)
        assert list(fs.labels) == [0, 1, 2, 3, 0]

    def test_identical_images_identical_rows(self):
        model = build_micro_mobilenet(4, 1)
        image = random_images(1, seed=9)[0]
        fs = extract_features(model, [image, image], [0, 1])
        np.testing.assert_array_equal(fs.features[0], fs.features[1])

    def test_matches_independent_layer_composition(self):
        # independent path: apply the tensor ops one by one, mirroring the
        # MicroMobileNet layer list, and compare the pooled vector
        model = build_micro_mobilenet(4, 2)
        image = Tensor(np.zeros((32, 32, 3), dtype=np.float32))
        fs = extract_features(model, [image], [0])

        x = conv2d(image, ConvKernel("standard", model.weights["conv1"]["w"], 1, "same"))
        x = relu(x)
        for block in (1, 2, 3):
            x = depthwise_conv2d(
                x, ConvKernel("depthwise", model.weights[f"block{block}_dw"]["w"], 2, "same"))
            x = relu(x)
            x = pointwise_conv2d(
                x, ConvKernel("pointwise", model.weights[f"block{block}_pw"]["w"], 1, "same"))
            x = relu(x)
        pooled = global_avg_pool(x)
        np.testing.assert_array_equal(fs.features[0], pooled.data.astype(np.float64))

    def test_shape_mismatch(self):
        model = build_micro_mobilenet(4, 1)
        bad = Tensor(np.zeros((8, 8, 3), dtype=np.float32))
        with pytest.raises(InvalidArgumentError, match="shape"):
            extract_features(model, [bad], [0])


class TestHeadLossAndGrad:
    def test_uniform_prediction_loss_is_ln2(self):
        fs = FeatureSet(np.random.default_rng(0).normal(size=(6, 4)),
                        [0, 1, 0, 1, 0, 1], ("a", "b"))
        loss, _, _ = head_loss_and_grad(np.zeros((2, 4)), np.zeros(2), fs)
        assert loss == pytest.approx(np.log(2.0), abs=1e-12)

    def test_gradients_match_central_differences(self):
        rng = np.random.default_rng(123)
        eps = 1e-3
        worst = 0.0
        for trial in range(50):
            m = int(rng.integers(2, 8))
            n = int(rng.integers(2, 6))
            k = 3
            fs = FeatureSet(rng.normal(size=(m, n)), rng.integers(0, k, size=m),
                            ("a", "b", "c"))
            w = rng.normal(size=(k, n))
            b = rng.normal(size=k)
            l2 = float(rng.choice([0.0, 1e-3, 1e-2]))
            _, grad_w, grad_b = head_loss_and_grad(w, b, fs, l2)

            numeric_w = np.zeros_like(w)
            for i in range(k):
                for j in range(n):
                    up, down = w.copy(), w.copy()
                    up[i, j] += eps
                    down[i, j] -= eps
                    lu, _, _ = head_loss_and_grad(up, b, fs, l2)
                    ld, _, _ = head_loss_and_grad(down, b, fs, l2)
                    numeric_w[i, j] = (lu - ld) / (2 * eps)
            numeric_b = np.zeros_like(b)
            for i in range(k):
                up, down = b.copy(), b.copy()
                up[i] += eps
                down[i] -= eps
                lu, _, _ = head_loss_and_grad(w, up, fs, l2)
                ld, _, _ = head_loss_and_grad(w, down, fs, l2)
                numeric_b[i] = (lu - ld) / (2 * eps)

            analytic = np.concatenate([grad_w.ravel(), grad_b])
            numeric = np.concatenate([numeric_w.ravel(), numeric_b])
            rel = np.linalg.norm(analytic - numeric) / max(
                np.linalg.norm(analytic), np.linalg.norm(numeric), 1e-12)
            worst = max(worst, rel)
        assert worst <= 1e-4

    def test_loss_vanishes_with_growing_margin(self):
        # one-hot-perfect logits: loss decreases monotonically toward zero
        x = np.eye(3)
        fs = FeatureSet(x, [0, 1, 2], ("a", "b", "c"))
        losses = []
        for margin in (1.0, 10.0, 100.0):
            w = margin * np.eye(3)
            loss, _, _ = head_loss_and_grad(w, np.zeros(3), fs, l2=0.0)
            losses.append(loss)
        assert losses[0] > losses[1] > losses[2]
        assert losses[2] < 1e-6

    def test_dimension_mismatch(self):
        fs = toy_features()
        with pytest.raises(InvalidArgumentError):
            head_loss_and_grad(np.zeros((3, 99)), np.zeros(3), fs)


class TestTrainHead:
    def test_linearly_separable_reaches_100_within_200_epochs(self):
        rng = np.random.default_rng(1)
        x0 = rng.normal(loc=(-2.0, 0.0), scale=0.2, size=(15, 2))
        x1 = rng.normal(loc=(2.0, 0.0), scale=0.2, size=(15, 2))
        fs = FeatureSet(np.concatenate([x0, x1]), [0] * 15 + [1] * 15, ("a", "b"))
        w, b, _ = train_head(fs, TrainConfig(epochs=200, learning_rate=0.05,
                                             batch_size=8, seed=3, l2=0.0))
        logits = fs.features @ w.T.astype(np.float64) + b.astype(np.float64)
        assert (logits.argmax(axis=1) == fs.labels).mean() == 1.0

    def test_loss_history_non_increasing_full_batch(self):
        fs = toy_features(seed=5)
        config = TrainConfig(epochs=120, learning_rate=0.01, batch_size=len(fs), seed=1)
        _, _, history = train_head(fs, config)
        assert len(history) == config.epochs
        for earlier, later in zip(history, history[1:]):
            assert later <= earlier + 1e-6

    def test_same_seed_identical_bytes(self):
        fs = toy_features(seed=8)
        config = TrainConfig(epochs=20, seed=99)
        w1, b1, _ = train_head(fs, config)
        w2, b2, _ = train_head(fs, config)
        assert w1.tobytes() == w2.tobytes()
        assert b1.tobytes() == b2.tobytes()

    def test_missing_class_listed_in_error(self):
        fs = FeatureSet(np.zeros((3, 2)), [0, 0, 1], ("a", "b", "missing"))
        with pytest.raises(InvalidArgumentError, match="missing"):
            train_head(fs, TrainConfig(epochs=1))

    def test_deterministic_function_of_inputs(self):
        fs = toy_features(seed=2)
        w1, b1, h1 = train_head(fs, TrainConfig(epochs=15, seed=4))
        w2, b2, h2 = train_head(fs, TrainConfig(epochs=15, seed=4))
        assert h1 == h2
        np.testing.assert_array_equal(w1, w2)
        np.testing.assert_array_equal(b1, b2)


class TestAttachHead:
    def test_forward_uses_new_head(self):
        model = build_micro_mobilenet(4, 6)
        w = np.zeros((4, 64), dtype=np.float32)
        b = np.array([0.0, 9.0, 0.0, 0.0], dtype=np.float32)
        new = attach_head(model, w, b)
        image = random_images(1, seed=1)[0]
        assert forward(new, image).ranking[0][0] == 1

    def test_original_model_unchanged(self):
        model = build_micro_mobilenet(4, 6)
        before = model.weights["head"]["w"].copy()
        attach_head(model, np.ones((4, 64), dtype=np.float32),
                    np.zeros(4, dtype=np.float32))
        np.testing.assert_array_equal(model.weights["head"]["w"], before)

    def test_conv_weights_preserved_bit_exact(self):
        model = build_micro_mobilenet(4, 6)
        new = attach_head(model, np.ones((4, 64), dtype=np.float32),
                          np.zeros(4, dtype=np.float32))
        for name in ("conv1", "block1_dw", "block1_pw", "block2_dw",
                     "block2_pw", "block3_dw", "block3_pw"):
            assert new.weights[name]["w"].tobytes() == model.weights[name]["w"].tobytes()

    def test_dimension_mismatch(self):
        model = build_micro_mobilenet(4, 6)
        with pytest.raises(InvalidArgumentError):
            attach_head(model, np.ones((4, 32), dtype=np.float32),
                        np.zeros(4, dtype=np.float32))

    def test_identity_scale_head_ranks_by_pooled_dot_products(self):
        model = build_micro_mobilenet(4, 6)
        rng = np.random.default_rng(11)
        w = rng.normal(size=(4, 64)).astype(np.float32)
        b = np.zeros(4, dtype=np.float32)
        new = attach_head(model, w, b)
        image = random_images(1, seed=2)[0]
        _, pooled = run_layers(model, image, capture="pool")
        manual = w.astype(np.float64) @ pooled.data.astype(np.float64)
        expected_order = sorted(range(4), key=lambda i: (-manual[i], i))
        got_order = [c for c, _ in forward(new, image).ranking]
        assert got_order == expected_order
