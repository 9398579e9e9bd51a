"""Numeric kernels: tensors, convolution variants, activation, pooling, dense.

All values are float32. Convolutions accumulate in float64 before casting
back so results stay within 1e-6 of a naive reference loop regardless of
summation order. "same" padding zero-fills with the extra row/column on the
bottom/right; row-major evaluation keeps results bit-stable across runs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError

VALID = "valid"
SAME = "same"

KIND_STANDARD = "standard"
KIND_DEPTHWISE = "depthwise"
KIND_POINTWISE = "pointwise"


class Tensor:
    """Rank-1 or rank-3 float32 array. Rank 3 is height x width x channels."""

    __slots__ = ("data",)

    def __init__(self, data):
        arr = np.asarray(data, dtype=np.float32)
        if arr.ndim not in (1, 3):
            raise InvalidArgumentError(f"tensor rank must be 1 or 3, got {arr.ndim}")
        if arr.size == 0:
            raise InvalidArgumentError("tensor must not be empty")
        if not np.all(np.isfinite(arr)):
            raise InvalidArgumentError("tensor contains non-finite values")
        self.data = arr

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def rank(self) -> int:
        return self.data.ndim

    @classmethod
    def zeros(cls, shape) -> "Tensor":
        return cls(np.zeros(shape, dtype=np.float32))

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape})"

    def __eq__(self, other) -> bool:
        return isinstance(other, Tensor) and np.array_equal(self.data, other.data)


@dataclass(frozen=True)
class ConvKernel:
    """Convolution weights plus geometry.

    Weight layout by kind: standard Kh x Kw x Cin x Cout, depthwise
    Kh x Kw x C (one filter per channel), pointwise 1 x 1 x Cin x Cout.
    """

    kind: str
    weights: np.ndarray
    stride: int = 1
    padding: str = VALID

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float32)
        object.__setattr__(self, "weights", w)
        if self.kind not in (KIND_STANDARD, KIND_DEPTHWISE, KIND_POINTWISE):
            raise InvalidArgumentError(f"unknown kernel kind {self.kind!r}")
        if self.stride < 1:
            raise InvalidArgumentError(f"stride must be >= 1, got {self.stride}")
        if self.padding not in (VALID, SAME):
            raise InvalidArgumentError(f"padding must be 'valid' or 'same', got {self.padding!r}")
        if self.kind == KIND_DEPTHWISE:
            if w.ndim != 3:
                raise InvalidArgumentError(f"depthwise weights must be rank 3, got rank {w.ndim}")
        else:
            if w.ndim != 4:
                raise InvalidArgumentError(f"{self.kind} weights must be rank 4, got rank {w.ndim}")
        if self.kind == KIND_POINTWISE and w.shape[:2] != (1, 1):
            raise InvalidArgumentError(
                f"pointwise kernel must be 1x1, got {w.shape[0]}x{w.shape[1]}"
            )


def _out_extent(size: int, k: int, stride: int, padding: str, axis: str) -> int:
    if padding == SAME:
        return -(-size // stride)  # ceil
    if size < k:
        raise InvalidArgumentError(
            f"input {axis} {size} smaller than kernel {axis} {k} with valid padding"
        )
    return (size - k) // stride + 1


def _pad_same(x: np.ndarray, kh: int, kw: int, stride: int) -> np.ndarray:
    h, w = x.shape[0], x.shape[1]
    oh, ow = -(-h // stride), -(-w // stride)
    pad_h = max((oh - 1) * stride + kh - h, 0)
    pad_w = max((ow - 1) * stride + kw - w, 0)
    top, left = pad_h // 2, pad_w // 2
    return np.pad(x, ((top, pad_h - top), (left, pad_w - left), (0, 0)))


def _conv_window_sum(x: np.ndarray, kernel: ConvKernel, per_channel: bool) -> np.ndarray:
    """Shared accumulation loop over kernel offsets, float64 accumulator."""
    w = kernel.weights.astype(np.float64)
    kh, kw = w.shape[0], w.shape[1]
    stride = kernel.stride
    oh = _out_extent(x.shape[0], kh, stride, kernel.padding, "height")
    ow = _out_extent(x.shape[1], kw, stride, kernel.padding, "width")
    if kernel.padding == SAME:
        x = _pad_same(x, kh, kw, stride)
    cout = x.shape[2] if per_channel else w.shape[3]
    acc = np.zeros((oh, ow, cout), dtype=np.float64)
    for u in range(kh):
        for v in range(kw):
            patch = x[u : u + (oh - 1) * stride + 1 : stride,
                      v : v + (ow - 1) * stride + 1 : stride, :]
            if per_channel:
                acc += patch * w[u, v]
            else:
                acc += np.einsum("ijc,cf->ijf", patch, w[u, v])
    return acc


def conv2d(input: Tensor, kernel: ConvKernel) -> Tensor:
    """Standard convolution: combines across channels and filters spatially."""
    if input.rank != 3:
        raise InvalidArgumentError(f"conv2d input must be rank 3, got rank {input.rank}")
    if kernel.kind != KIND_STANDARD:
        raise InvalidArgumentError(f"conv2d requires a standard kernel, got {kernel.kind!r}")
    cin = input.shape[2]
    if kernel.weights.shape[2] != cin:
        raise InvalidArgumentError(
            f"kernel expects {kernel.weights.shape[2]} input channels, image has {cin}"
        )
    x = input.data.astype(np.float64)
    return Tensor(_conv_window_sum(x, kernel, per_channel=False).astype(np.float32))


def depthwise_conv2d(input: Tensor, kernel: ConvKernel) -> Tensor:
    """Per-channel spatial filtering; no cross-channel mixing."""
    if input.rank != 3:
        raise InvalidArgumentError(f"depthwise input must be rank 3, got rank {input.rank}")
    if kernel.kind != KIND_DEPTHWISE:
        raise InvalidArgumentError(f"expected a depthwise kernel, got {kernel.kind!r}")
    cin = input.shape[2]
    if kernel.weights.shape[2] != cin:
        raise InvalidArgumentError(
            f"depthwise kernel has {kernel.weights.shape[2]} channels, image has {cin}"
        )
    x = input.data.astype(np.float64)
    return Tensor(_conv_window_sum(x, kernel, per_channel=True).astype(np.float32))


def pointwise_conv2d(input: Tensor, kernel: ConvKernel) -> Tensor:
    """1x1 convolution: per-pixel linear map across channels."""
    if input.rank != 3:
        raise InvalidArgumentError(f"pointwise input must be rank 3, got rank {input.rank}")
    if kernel.kind != KIND_POINTWISE:
        raise InvalidArgumentError(f"expected a pointwise kernel, got {kernel.kind!r}")
    if kernel.stride != 1:
        raise InvalidArgumentError(f"pointwise stride must be 1, got {kernel.stride}")
    cin = input.shape[2]
    if kernel.weights.shape[2] != cin:
        raise InvalidArgumentError(
            f"pointwise kernel has {kernel.weights.shape[2]} input channels, image has {cin}"
        )
    x = input.data.astype(np.float64)
    w = kernel.weights[0, 0].astype(np.float64)
    return Tensor(np.einsum("ijc,cf->ijf", x, w).astype(np.float32))


def relu(t: Tensor) -> Tensor:
    return Tensor(np.maximum(t.data, np.float32(0.0)))


def global_avg_pool(t: Tensor) -> Tensor:
    """Per-channel mean over the spatial extent; rank 3 -> rank 1."""
    if t.rank != 3:
        raise InvalidArgumentError(f"global_avg_pool input must be rank 3, got rank {t.rank}")
    return Tensor(t.data.astype(np.float64).mean(axis=(0, 1)).astype(np.float32))


def dense(v: Tensor, weights: np.ndarray, bias: Tensor) -> Tensor:
    """Affine map W v + b with W of shape K x N."""
    if v.rank != 1:
        raise InvalidArgumentError(f"dense input must be rank 1, got rank {v.rank}")
    w = np.asarray(weights, dtype=np.float32)
    if w.ndim != 2:
        raise InvalidArgumentError(f"dense weights must be a matrix, got rank {w.ndim}")
    if w.shape[1] != v.shape[0]:
        raise InvalidArgumentError(
            f"dense weights expect input length {w.shape[1]}, got {v.shape[0]}"
        )
    if bias.shape != (w.shape[0],):
        raise InvalidArgumentError(
            f"dense bias length {bias.shape[0]} does not match output length {w.shape[0]}"
        )
    out = w.astype(np.float64) @ v.data.astype(np.float64) + bias.data.astype(np.float64)
    return Tensor(out.astype(np.float32))


def softmax(v: Tensor) -> Tensor:
    """Max-subtracted softmax; outputs positive and sum to 1 within 1e-6."""
    if v.rank != 1:
        raise InvalidArgumentError(f"softmax input must be rank 1, got rank {v.rank}")
    z = v.data.astype(np.float64)
    e = np.exp(z - z.max())
    return Tensor((e / e.sum()).astype(np.float32))
