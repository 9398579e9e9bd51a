"""Head retraining: the conv trunk stays frozen, only the dense+softmax
classifier is fit with mini-batch gradient descent on cross-entropy."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import InvalidArgumentError
from .models import DENSE, Model, run_layers
from .rng import SplitMix64
from .tensor import Tensor


@dataclass
class FeatureSet:
    """Pooled activations for M samples: features M x N, labels length M."""

    features: np.ndarray
    labels: np.ndarray
    class_names: tuple[str, ...]

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.class_names = tuple(self.class_names)
        if self.features.ndim != 2 or self.features.shape[0] < 1:
            raise InvalidArgumentError("features must be a nonempty M x N matrix")
        if self.labels.shape != (self.features.shape[0],):
            raise InvalidArgumentError("labels length must match feature rows")
        if not np.all(np.isfinite(self.features)):
            raise InvalidArgumentError("features contain non-finite values")
        if self.labels.min() < 0 or self.labels.max() >= len(self.class_names):
            raise InvalidArgumentError("label outside class range")

    def __len__(self) -> int:
        return self.features.shape[0]

    def slice(self, indices) -> "FeatureSet":
        indices = np.asarray(indices, dtype=np.int64)
        if indices.size == 0:
            raise InvalidArgumentError("empty batch")
        return FeatureSet(self.features[indices], self.labels[indices], self.class_names)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 300
    learning_rate: float = 0.05
    batch_size: int = 32
    seed: int = 7
    l2: float = 1e-4

    def __post_init__(self):
        if self.epochs < 1:
            raise InvalidArgumentError("epochs must be positive")
        if self.learning_rate <= 0:
            raise InvalidArgumentError("learning_rate must be positive")
        if self.batch_size < 1:
            raise InvalidArgumentError("batch_size must be positive")
        if self.l2 < 0:
            raise InvalidArgumentError("l2 must be nonnegative")


def pooled_layer_name(model: Model) -> str:
    for layer in model.spec.layers:
        if layer.kind == "global_avg_pool":
            return layer.name
    raise InvalidArgumentError("model has no global_avg_pool layer to extract from")


def extract_features(model: Model, images: list[Tensor], labels) -> FeatureSet:
    """Capture each image's global_avg_pool output as one feature row."""
    labels = np.asarray(labels, dtype=np.int64)
    if len(images) != labels.shape[0]:
        raise InvalidArgumentError("images and labels must have equal length")
    capture = pooled_layer_name(model)
    rows = []
    for image in images:
        _, pooled = run_layers(model, image, capture=capture)
        rows.append(pooled.data.astype(np.float64))
    return FeatureSet(np.stack(rows), labels, model.spec.class_names)


def head_loss_and_grad(W: np.ndarray, b: np.ndarray, batch: FeatureSet, l2: float = 0.0):
    """Mean cross-entropy plus l2/2 * ||W||^2, with analytic gradients.

    Log-sum-exp stabilized. W is K x N, b is length K.
    """
    W = np.asarray(W, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    x, y = batch.features, batch.labels
    m, n = x.shape
    if m < 1:
        raise InvalidArgumentError("empty batch")
    if W.ndim != 2 or W.shape[1] != n:
        raise InvalidArgumentError(f"W must be K x {n}, got {W.shape}")
    k = W.shape[0]
    if b.shape != (k,):
        raise InvalidArgumentError(f"b must have length {k}, got {b.shape}")

    z = x @ W.T + b                                  # M x K logits
    zmax = z.max(axis=1, keepdims=True)
    lse = zmax[:, 0] + np.log(np.exp(z - zmax).sum(axis=1))
    loss = float((lse - z[np.arange(m), y]).mean() + 0.5 * l2 * (W * W).sum())

    p = np.exp(z - lse[:, None])                     # softmax rows
    p[np.arange(m), y] -= 1.0
    g = p / m
    grad_w = g.T @ x + l2 * W
    grad_b = g.sum(axis=0)
    return loss, grad_w, grad_b


def train_head(features: FeatureSet, config: TrainConfig):
    """Mini-batch SGD; order reshuffled per epoch by a seeded generator.

    Descent runs on centered features rescaled by their mean standard
    deviation (a preconditioner: pooled activations from an untrained trunk
    can sit orders of magnitude below unit scale) and the affine transform
    is folded back into the returned head, so (W, b) apply to raw pooled
    features. Returns (W, b, loss_history); loss_history[e] is the
    full-dataset loss after epoch e. Outputs are a pure function of
    (features, config).
    """
    k = len(features.class_names)
    present = np.bincount(features.labels, minlength=k)
    missing = [features.class_names[i] for i in range(k) if present[i] == 0]
    if missing:
        raise InvalidArgumentError(f"no training samples for class(es): {', '.join(missing)}")

    mu = features.features.mean(axis=0)
    scale = float(features.features.std(axis=0).mean())
    sigma = np.full(features.features.shape[1], scale if scale > 1e-12 else 1.0)
    scaled = FeatureSet((features.features - mu) / sigma, features.labels,
                        features.class_names)

    n = scaled.features.shape[1]
    W = np.zeros((k, n), dtype=np.float64)
    b = np.zeros(k, dtype=np.float64)
    gen = SplitMix64(config.seed)
    order = list(range(len(scaled)))
    history = []
    for _ in range(config.epochs):
        gen.shuffle(order)
        for start in range(0, len(order), config.batch_size):
            batch = scaled.slice(order[start : start + config.batch_size])
            _, gw, gb = head_loss_and_grad(W, b, batch, config.l2)
            W -= config.learning_rate * gw
            b -= config.learning_rate * gb
        epoch_loss, _, _ = head_loss_and_grad(W, b, scaled, config.l2)
        history.append(epoch_loss)

    w_raw = W / sigma
    b_raw = b - w_raw @ mu
    return w_raw.astype(np.float32), b_raw.astype(np.float32), history


def attach_head(model: Model, W: np.ndarray, b: np.ndarray) -> Model:
    """New model with the dense head replaced; conv weights are shared as-is."""
    W = np.asarray(W, dtype=np.float32)
    b = np.asarray(b, dtype=np.float32)
    head = next((l for l in model.spec.layers if l.kind == DENSE), None)
    if head is None:
        raise InvalidArgumentError("model has no dense head")
    if W.shape != (head.out_channels, head.in_channels):
        raise InvalidArgumentError(
            f"head weights must be {head.out_channels} x {head.in_channels}, got {W.shape}"
        )
    if b.shape != (head.out_channels,):
        raise InvalidArgumentError(f"head bias must have length {head.out_channels}")
    weights = {name: dict(entry) for name, entry in model.weights.items()}
    weights[head.name] = {"w": W, "b": b}
    return replace(model, weights=weights)
