"""Declarative model specs, forward pass, cost accounting and serialization.

The runnable reference architecture is MicroMobileNet: a 32x32x3 network of
one standard conv followed by three depthwise+pointwise blocks, a global
average pool and a dense softmax head. MicroStandardNet swaps each block for
a single standard conv and serves as the cost-comparison counterpart.
"""

from __future__ import annotations

import base64
import importlib.resources
import json
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import IntegrityError, InvalidArgumentError, ParseError
from .rng import SplitMix64
from .tensor import (
    KIND_DEPTHWISE,
    KIND_POINTWISE,
    KIND_STANDARD,
    SAME,
    ConvKernel,
    Tensor,
    conv2d,
    dense,
    depthwise_conv2d,
    global_avg_pool,
    pointwise_conv2d,
    relu,
    softmax,
)

FORMAT_VERSION = 1

CONV_STANDARD = "conv_standard"
CONV_DEPTHWISE = "conv_depthwise"
CONV_POINTWISE = "conv_pointwise"
RELU = "relu"
GLOBAL_AVG_POOL = "global_avg_pool"
DENSE = "dense"
SOFTMAX = "softmax"

CONV_KINDS = (CONV_STANDARD, CONV_DEPTHWISE, CONV_POINTWISE)
PARAMETERIZED_KINDS = CONV_KINDS + (DENSE,)


@dataclass(frozen=True)
class LayerSpec:
    name: str
    kind: str
    kernel_size: int = 0
    stride: int = 1
    padding: str = SAME
    in_channels: int = 0
    out_channels: int = 0


@dataclass(frozen=True)
class ModelSpec:
    input_shape: tuple[int, int, int]
    layers: tuple[LayerSpec, ...]
    class_names: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "input_shape", tuple(self.input_shape))
        object.__setattr__(self, "layers", tuple(self.layers))
        object.__setattr__(self, "class_names", tuple(self.class_names))
        validate_spec(self)


def _out_spatial(size: int, k: int, stride: int, padding: str) -> int:
    if padding == SAME:
        return -(-size // stride)
    if size < k:
        raise InvalidArgumentError(f"spatial size {size} smaller than kernel {k}")
    return (size - k) // stride + 1


def shape_walk(spec: ModelSpec) -> list[tuple[int, ...]]:
    """Shape after each layer; raises if consecutive layers are incompatible."""
    shapes = []
    cur: tuple[int, ...] = spec.input_shape
    names = set()
    for layer in spec.layers:
        if layer.name in names:
            raise InvalidArgumentError(f"duplicate layer name {layer.name!r}")
        names.add(layer.name)
        if layer.kind in CONV_KINDS:
            if len(cur) != 3:
                raise InvalidArgumentError(f"layer {layer.name!r} needs a rank-3 input")
            h, w, c = cur
            if layer.in_channels != c:
                raise InvalidArgumentError(
                    f"layer {layer.name!r} expects {layer.in_channels} channels, gets {c}"
                )
            if layer.kind == CONV_POINTWISE:
                if layer.kernel_size != 1:
                    raise InvalidArgumentError(f"layer {layer.name!r}: pointwise kernel must be 1")
                cur = (h, w, layer.out_channels)
            else:
                oh = _out_spatial(h, layer.kernel_size, layer.stride, layer.padding)
                ow = _out_spatial(w, layer.kernel_size, layer.stride, layer.padding)
                if layer.kind == CONV_DEPTHWISE:
                    if layer.out_channels != layer.in_channels:
                        raise InvalidArgumentError(
                            f"layer {layer.name!r}: depthwise output channels must equal input"
                        )
                    cur = (oh, ow, c)
                else:
                    cur = (oh, ow, layer.out_channels)
        elif layer.kind == RELU:
            pass
        elif layer.kind == GLOBAL_AVG_POOL:
            if len(cur) != 3:
                raise InvalidArgumentError(f"layer {layer.name!r} needs a rank-3 input")
            cur = (cur[2],)
        elif layer.kind == DENSE:
            if len(cur) != 1:
                raise InvalidArgumentError(f"layer {layer.name!r} needs a rank-1 input")
            if layer.in_channels != cur[0]:
                raise InvalidArgumentError(
                    f"layer {layer.name!r} expects length {layer.in_channels}, gets {cur[0]}"
                )
            cur = (layer.out_channels,)
        elif layer.kind == SOFTMAX:
            if len(cur) != 1:
                raise InvalidArgumentError(f"layer {layer.name!r} needs a rank-1 input")
        else:
            raise InvalidArgumentError(f"unknown layer kind {layer.kind!r}")
        shapes.append(cur)
    return shapes


def validate_spec(spec: ModelSpec) -> None:
    if len(spec.class_names) < 1:
        raise InvalidArgumentError("spec needs at least one class name")
    if not spec.layers or spec.layers[-1].kind != SOFTMAX:
        raise InvalidArgumentError("final layer must be softmax")
    if not any(l.kind in CONV_KINDS for l in spec.layers):
        raise InvalidArgumentError("spec needs at least one conv layer")
    shapes = shape_walk(spec)
    if shapes[-1] != (len(spec.class_names),):
        raise InvalidArgumentError(
            f"softmax output length {shapes[-1]} does not match {len(spec.class_names)} classes"
        )


@dataclass
class Model:
    spec: ModelSpec
    weights: dict[str, dict[str, np.ndarray]]
    seed: int

    def __post_init__(self):
        for layer in self.spec.layers:
            if layer.kind not in PARAMETERIZED_KINDS:
                continue
            entry = self.weights.get(layer.name)
            if entry is None:
                raise IntegrityError(f"missing weights for layer {layer.name!r}")
            expected = weight_shapes(layer)
            for key, shape in expected.items():
                arr = entry.get(key)
                if arr is None or arr.shape != shape:
                    got = None if arr is None else arr.shape
                    raise IntegrityError(
                        f"layer {layer.name!r} weight {key!r}: expected shape {shape}, got {got}"
                    )
                if not np.all(np.isfinite(arr)):
                    raise IntegrityError(f"layer {layer.name!r} weight {key!r} is not finite")


@dataclass(frozen=True)
class ClassificationResult:
    """Full descending ranking of (class index, score) plus forward latency."""

    ranking: tuple[tuple[int, float], ...]
    latency_ms: float
    class_names: tuple[str, ...] = field(default=())

    @property
    def top_class(self) -> int:
        return self.ranking[0][0]

    def scores(self) -> list[float]:
        by_class = sorted(self.ranking, key=lambda cs: cs[0])
        return [s for _, s in by_class]


def weight_shapes(layer: LayerSpec) -> dict[str, tuple[int, ...]]:
    k = layer.kernel_size
    if layer.kind == CONV_STANDARD:
        return {"w": (k, k, layer.in_channels, layer.out_channels)}
    if layer.kind == CONV_DEPTHWISE:
        return {"w": (k, k, layer.in_channels)}
    if layer.kind == CONV_POINTWISE:
        return {"w": (1, 1, layer.in_channels, layer.out_channels)}
    if layer.kind == DENSE:
        return {"w": (layer.out_channels, layer.in_channels), "b": (layer.out_channels,)}
    return {}


def _glorot_bound(layer: LayerSpec) -> float:
    k = layer.kernel_size
    if layer.kind == CONV_STANDARD:
        fan_in, fan_out = k * k * layer.in_channels, k * k * layer.out_channels
    elif layer.kind == CONV_DEPTHWISE:
        fan_in = fan_out = k * k
    elif layer.kind == CONV_POINTWISE:
        fan_in, fan_out = layer.in_channels, layer.out_channels
    else:
        fan_in, fan_out = layer.in_channels, layer.out_channels
    return math.sqrt(6.0 / (fan_in + fan_out))


def init_weights(spec: ModelSpec, seed: int) -> dict[str, dict[str, np.ndarray]]:
    """Uniform [-r, r] with r = sqrt(6/(fan_in+fan_out)); dense bias starts at 0.

    Weights are drawn row-major, layer by layer, from one SplitMix64 stream,
    so a (spec, seed) pair fixes every byte of the model.
    """
    gen = SplitMix64(seed)
    weights: dict[str, dict[str, np.ndarray]] = {}
    for layer in spec.layers:
        shapes = weight_shapes(layer)
        if not shapes:
            continue
        r = _glorot_bound(layer)
        entry: dict[str, np.ndarray] = {}
        for key, shape in shapes.items():
            n = int(np.prod(shape))
            if key == "b":
                entry[key] = np.zeros(shape, dtype=np.float32)
            else:
                entry[key] = gen.uniforms(n, -r, r).astype(np.float32).reshape(shape)
        weights[layer.name] = entry
    return weights


def _micro_layers(num_classes: int, separable: bool) -> tuple[LayerSpec, ...]:
    layers = [
        LayerSpec("conv1", CONV_STANDARD, kernel_size=3, stride=1, padding=SAME,
                  in_channels=3, out_channels=8),
        LayerSpec("conv1_relu", RELU),
    ]
    cin = 8
    for i, cout in enumerate((16, 32, 64), start=1):
        if separable:
            layers += [
                LayerSpec(f"block{i}_dw", CONV_DEPTHWISE, kernel_size=3, stride=2,
                          padding=SAME, in_channels=cin, out_channels=cin),
                LayerSpec(f"block{i}_dw_relu", RELU),
                LayerSpec(f"block{i}_pw", CONV_POINTWISE, kernel_size=1, stride=1,
                          padding=SAME, in_channels=cin, out_channels=cout),
                LayerSpec(f"block{i}_pw_relu", RELU),
            ]
        else:
            layers += [
                LayerSpec(f"block{i}_conv", CONV_STANDARD, kernel_size=3, stride=2,
                          padding=SAME, in_channels=cin, out_channels=cout),
                LayerSpec(f"block{i}_relu", RELU),
            ]
        cin = cout
    layers += [
        LayerSpec("pool", GLOBAL_AVG_POOL),
        LayerSpec("head", DENSE, in_channels=64, out_channels=num_classes),
        LayerSpec("probs", SOFTMAX),
    ]
    return tuple(layers)


def _default_class_names(num_classes: int) -> tuple[str, ...]:
    return tuple(f"class_{i:03d}" for i in range(num_classes))


def build_micro_mobilenet(num_classes: int, seed: int,
                          class_names: tuple[str, ...] | None = None) -> Model:
    if num_classes < 2:
        raise InvalidArgumentError(f"num_classes must be >= 2, got {num_classes}")
    names = tuple(class_names) if class_names else _default_class_names(num_classes)
    if len(names) != num_classes:
        raise InvalidArgumentError("class_names length must equal num_classes")
    spec = ModelSpec((32, 32, 3), _micro_layers(num_classes, separable=True), names)
    return Model(spec, init_weights(spec, seed), seed)


def build_micro_standardnet(num_classes: int, seed: int,
                            class_names: tuple[str, ...] | None = None) -> Model:
    if num_classes < 2:
        raise InvalidArgumentError(f"num_classes must be >= 2, got {num_classes}")
    names = tuple(class_names) if class_names else _default_class_names(num_classes)
    if len(names) != num_classes:
        raise InvalidArgumentError("class_names length must equal num_classes")
    spec = ModelSpec((32, 32, 3), _micro_layers(num_classes, separable=False), names)
    return Model(spec, init_weights(spec, seed), seed)


def run_layers(model: Model, image: Tensor, capture: str | None = None):
    """Apply every layer in order; optionally capture one layer's output."""
    if image.shape != model.spec.input_shape:
        raise InvalidArgumentError(
            f"image shape {image.shape} does not match model input {model.spec.input_shape}"
        )
    cur = image
    captured = None
    for layer in model.spec.layers:
        if layer.kind == CONV_STANDARD:
            kernel = ConvKernel(KIND_STANDARD, model.weights[layer.name]["w"],
                                layer.stride, layer.padding)
            cur = conv2d(cur, kernel)
        elif layer.kind == CONV_DEPTHWISE:
            kernel = ConvKernel(KIND_DEPTHWISE, model.weights[layer.name]["w"],
                                layer.stride, layer.padding)
            cur = depthwise_conv2d(cur, kernel)
        elif layer.kind == CONV_POINTWISE:
            kernel = ConvKernel(KIND_POINTWISE, model.weights[layer.name]["w"],
                                1, layer.padding)
            cur = pointwise_conv2d(cur, kernel)
        elif layer.kind == RELU:
            cur = relu(cur)
        elif layer.kind == GLOBAL_AVG_POOL:
            cur = global_avg_pool(cur)
        elif layer.kind == DENSE:
            entry = model.weights[layer.name]
            cur = dense(cur, entry["w"], Tensor(entry["b"]))
        elif layer.kind == SOFTMAX:
            cur = softmax(cur)
        if layer.name == capture:
            captured = cur
    return cur, captured


def rank_scores(scores: np.ndarray) -> tuple[tuple[int, float], ...]:
    """Descending by score; ties broken by ascending class index."""
    order = sorted(range(len(scores)), key=lambda i: (-float(scores[i]), i))
    return tuple((i, float(scores[i])) for i in order)


def forward(model: Model, image: Tensor, clock=time.perf_counter) -> ClassificationResult:
    """One inference: full class ranking plus wall-clock latency in ms."""
    t0 = clock()
    probs, _ = run_layers(model, image)
    t1 = clock()
    return ClassificationResult(
        ranking=rank_scores(probs.data),
        latency_ms=(t1 - t0) * 1000.0,
        class_names=model.spec.class_names,
    )


def param_count(spec: ModelSpec) -> dict[str, int]:
    """Exact parameter counts per layer kind plus total."""
    counts = {kind: 0 for kind in PARAMETERIZED_KINDS}
    for layer in spec.layers:
        k = layer.kernel_size
        if layer.kind == CONV_STANDARD:
            counts[layer.kind] += k * k * layer.in_channels * layer.out_channels
        elif layer.kind == CONV_DEPTHWISE:
            counts[layer.kind] += k * k * layer.in_channels
        elif layer.kind == CONV_POINTWISE:
            counts[layer.kind] += layer.in_channels * layer.out_channels
        elif layer.kind == DENSE:
            counts[layer.kind] += layer.out_channels * layer.in_channels + layer.out_channels
    counts["total"] = sum(counts[kind] for kind in PARAMETERIZED_KINDS)
    return counts


def mult_add_count(spec: ModelSpec, input_shape: tuple[int, int, int] | None = None) -> dict[str, int]:
    """Exact mult-add counts per layer kind plus total."""
    if input_shape is not None and tuple(input_shape) != spec.input_shape:
        spec = ModelSpec(tuple(input_shape), spec.layers, spec.class_names)
    counts = {kind: 0 for kind in PARAMETERIZED_KINDS}
    cur = spec.input_shape
    for layer, shape in zip(spec.layers, shape_walk(spec)):
        k = layer.kernel_size
        if layer.kind == CONV_STANDARD:
            oh, ow, _ = shape
            counts[layer.kind] += oh * ow * k * k * layer.in_channels * layer.out_channels
        elif layer.kind == CONV_DEPTHWISE:
            oh, ow, _ = shape
            counts[layer.kind] += oh * ow * k * k * layer.in_channels
        elif layer.kind == CONV_POINTWISE:
            oh, ow, _ = shape
            counts[layer.kind] += oh * ow * layer.in_channels * layer.out_channels
        elif layer.kind == DENSE:
            counts[layer.kind] += layer.out_channels * layer.in_channels
        cur = shape
    counts["total"] = sum(counts[kind] for kind in PARAMETERIZED_KINDS)
    return counts


def pointwise_param_fraction(spec: ModelSpec) -> float:
    counts = param_count(spec)
    return counts[CONV_POINTWISE] / counts["total"]


def network_depth(spec: ModelSpec) -> int:
    """Number of parameterized layers, counting depthwise and pointwise separately."""
    return sum(1 for l in spec.layers if l.kind in PARAMETERIZED_KINDS)


def load_mobilenet_v1_spec() -> ModelSpec:
    """The full-size 224x224x3, 1000-class counting fixture, shipped as data."""
    raw = importlib.resources.files("producescan.data").joinpath("mobilenet_v1.json").read_text()
    doc = json.loads(raw)
    layers = tuple(LayerSpec(**entry) for entry in doc["layers"])
    names = _default_class_names(doc["num_classes"])
    return ModelSpec(tuple(doc["input_shape"]), layers, names)


# --- serialization ---------------------------------------------------------

def _spec_to_doc(spec: ModelSpec) -> dict:
    return {
        "input_shape": list(spec.input_shape),
        "layers": [
            {
                "name": l.name, "kind": l.kind, "kernel_size": l.kernel_size,
                "stride": l.stride, "padding": l.padding,
                "in_channels": l.in_channels, "out_channels": l.out_channels,
            }
            for l in spec.layers
        ],
    }


def _encode_array(arr: np.ndarray) -> str:
    return base64.b64encode(arr.astype("<f4").tobytes()).decode("ascii")


def _decode_array(text: str, shape: tuple[int, ...], layer: str, key: str) -> np.ndarray:
    try:
        raw = base64.b64decode(text.encode("ascii"), validate=True)
    except Exception as exc:
        raise ParseError(f"layer {layer!r} weight {key!r}: invalid base64 ({exc})") from exc
    expected = int(np.prod(shape)) * 4
    if len(raw) != expected:
        raise IntegrityError(
            f"layer {layer!r} weight {key!r}: expected {expected} bytes, got {len(raw)}"
        )
    return np.frombuffer(raw, dtype="<f4").astype(np.float32).reshape(shape)


def save_model(model: Model, path) -> None:
    doc = {
        "format_version": FORMAT_VERSION,
        "spec": _spec_to_doc(model.spec),
        "class_names": list(model.spec.class_names),
        "seed": model.seed,
        "weights": {
            name: {key: _encode_array(arr) for key, arr in sorted(entry.items())}
            for name, entry in sorted(model.weights.items())
        },
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")


def load_model(path) -> Model:
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"model file is not valid JSON: {exc.msg}", offset=exc.pos) from exc
    if not isinstance(doc, dict):
        raise ParseError("model file must contain a JSON object")
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise ParseError(f"unsupported format_version {version!r}")
    try:
        spec_doc = doc["spec"]
        layers = tuple(LayerSpec(**entry) for entry in spec_doc["layers"])
        spec = ModelSpec(tuple(spec_doc["input_shape"]), layers, tuple(doc["class_names"]))
        seed = int(doc["seed"])
        weight_doc = doc["weights"]
    except (KeyError, TypeError) as exc:
        raise ParseError(f"model file missing field: {exc}") from exc
    weights: dict[str, dict[str, np.ndarray]] = {}
    for layer in spec.layers:
        shapes = weight_shapes(layer)
        if not shapes:
            continue
        entry_doc = weight_doc.get(layer.name)
        if entry_doc is None:
            raise IntegrityError(f"missing weights for layer {layer.name!r}")
        entry = {}
        for key, shape in shapes.items():
            if key not in entry_doc:
                raise IntegrityError(f"layer {layer.name!r} missing weight {key!r}")
            entry[key] = _decode_array(entry_doc[key], shape, layer.name, key)
        weights[layer.name] = entry
    return Model(spec, weights, seed)
