"""Dataset plumbing: binary PPM codec, nearest-neighbor resize, directory
ingestion with deterministic splits, and the synthetic produce generator.

The generator paints one filled ellipse per image over a noisy gray
background. Class k of K gets hue 360*k/K with a small jitter, so classes
are separable by hue alone; failures downstream indict the classifier,
never the data.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvalidArgumentError, ParseError, UnsupportedFormatError
from .rng import SplitMix64, derive_seed
from .tensor import Tensor

CANONICAL_CLASSES = (
    "apple", "avocado", "banana", "bell pepper", "clementine",
    "kiwi", "orange", "pear", "potato", "tomato",
)

TRAIN = "train"
TEST = "test"


@dataclass
class LabeledImage:
    image: Tensor
    class_index: int
    source: str

    def __post_init__(self):
        if self.image.rank != 3 or self.image.shape[2] != 3:
            raise InvalidArgumentError("labeled image must be H x W x 3")
        data = self.image.data
        if data.min() < 0.0 or data.max() > 1.0:
            raise InvalidArgumentError("image values must lie in [0, 1]")


@dataclass
class DatasetManifest:
    class_names: list[str]
    files: dict[str, list[str]]
    splits: dict[str, str] = field(default_factory=dict)  # file -> "train" | "test"
    seed: int | None = None

    def split_files(self, split: str) -> list[tuple[str, int]]:
        """(path, class_index) pairs for one split, in manifest order."""
        out = []
        for idx, name in enumerate(self.class_names):
            for path in self.files[name]:
                if self.splits.get(path, TRAIN) == split:
                    out.append((path, idx))
        return out

    def to_json(self) -> str:
        doc = {"classes": self.class_names, "files": self.files,
               "splits": self.splits, "seed": self.seed}
        return json.dumps(doc, sort_keys=True, indent=1) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "DatasetManifest":
        doc = json.loads(text)
        return cls(doc["classes"], doc["files"], doc.get("splits", {}), doc.get("seed"))


# --- PPM codec --------------------------------------------------------------

def _read_header_token(blob: bytes, pos: int) -> tuple[bytes, int]:
    while pos < len(blob):
        c = blob[pos : pos + 1]
        if c == b"#":
            while pos < len(blob) and blob[pos : pos + 1] != b"\n":
                pos += 1
        elif c.isspace():
            pos += 1
        else:
            break
    start = pos
    while pos < len(blob) and not blob[pos : pos + 1].isspace():
        pos += 1
    if start == pos:
        raise ParseError("unexpected end of header", offset=start)
    return blob[start:pos], pos


def decode_ppm(blob: bytes) -> Tensor:
    if blob[:2] in (b"P1", b"P2", b"P3", b"P4", b"P5"):
        raise UnsupportedFormatError(
            f"only binary P6 pixmaps are supported, got {blob[:2].decode('ascii')}"
        )
    if blob[:2] != b"P6":
        raise ParseError("not a P6 pixmap (bad magic)", offset=0)
    pos = 2
    dims = []
    for _ in range(3):
        token, pos = _read_header_token(blob, pos)
        if not token.isdigit():
            raise ParseError(f"expected integer in header, got {token!r}", offset=pos - len(token))
        dims.append(int(token))
    width, height, maxval = dims
    if maxval != 255:
        raise UnsupportedFormatError(f"maxval must be 255, got {maxval}")
    if width < 1 or height < 1:
        raise ParseError(f"bad dimensions {width}x{height}", offset=2)
    pos += 1  # single whitespace after maxval
    expected = width * height * 3
    raw = blob[pos : pos + expected]
    if len(raw) != expected:
        raise ParseError(
            f"truncated pixel data: expected {expected} bytes, got {len(raw)}",
            offset=pos + len(raw),
        )
    pixels = np.frombuffer(raw, dtype=np.uint8).reshape(height, width, 3)
    return Tensor(pixels.astype(np.float32) / np.float32(255.0))


def encode_ppm(image: Tensor) -> bytes:
    if image.rank != 3 or image.shape[2] != 3:
        raise InvalidArgumentError("PPM image must be H x W x 3")
    h, w, _ = image.shape
    quantized = np.rint(image.data * 255.0).clip(0, 255).astype(np.uint8)
    return b"P6\n%d %d\n255\n" % (w, h) + quantized.tobytes()


def read_ppm(path) -> Tensor:
    with open(path, "rb") as fh:
        return decode_ppm(fh.read())


def write_ppm(image: Tensor, path) -> None:
    with open(path, "wb") as fh:
        fh.write(encode_ppm(image))


def resize_nearest(image: Tensor, height: int, width: int) -> Tensor:
    """Nearest-neighbor resampling; source index = floor(src * i / dst)."""
    if height < 1 or width < 1:
        raise InvalidArgumentError("target size must be positive")
    src_h, src_w = image.shape[0], image.shape[1]
    rows = (np.arange(height) * src_h) // height
    cols = (np.arange(width) * src_w) // width
    return Tensor(image.data[np.ix_(rows, cols)])


def to_model_input(image: Tensor, height: int, width: int) -> Tensor:
    """Canonical preprocessing at the model boundary: nearest-neighbor resize
    to the network's spatial size, then map [0, 1] pixels to [-1, 1] so conv
    responses encode contrast rather than overall brightness."""
    resized = resize_nearest(image, height, width)
    return Tensor(resized.data * np.float32(2.0) - np.float32(1.0))


# --- directory ingestion ----------------------------------------------------

def load_dataset(root_dir) -> tuple[DatasetManifest, list[LabeledImage]]:
    """Scan root/<class_name>/*.ppm; classes and files in sorted order."""
    root = Path(root_dir)
    if not root.is_dir():
        raise InvalidArgumentError(f"dataset root {root} is not a directory")
    class_names = []
    files: dict[str, list[str]] = {}
    for entry in sorted(p for p in root.iterdir() if p.is_dir()):
        ppms = sorted(str(p.relative_to(root)) for p in entry.glob("*.ppm"))
        if not ppms:
            warnings.warn(f"class directory {entry.name!r} has no .ppm files; excluded")
            continue
        class_names.append(entry.name)
        files[entry.name] = ppms
    manifest = DatasetManifest(class_names, files)
    images = []
    for idx, name in enumerate(class_names):
        for rel in files[name]:
            path = root / rel
            try:
                tensor = read_ppm(path)
            except OSError as exc:
                raise InvalidArgumentError(f"unreadable file {path}: {exc}") from exc
            images.append(LabeledImage(tensor, idx, str(path)))
    return manifest, images


def split_dataset(manifest: DatasetManifest, test_fraction: float, seed: int) -> DatasetManifest:
    """Per-class stratified shuffle; both splits keep at least one item."""
    if not 0.0 < test_fraction < 1.0:
        raise InvalidArgumentError("test_fraction must be in (0, 1)")
    splits: dict[str, str] = {}
    gen = SplitMix64(derive_seed(seed, 0x5B17))
    for name in manifest.class_names:

        paths = list(manifest.files[name])
        n_test = max(1, int(len(paths) * test_fraction))
        if len(paths) - n_test < 1:
            raise InvalidArgumentError(
                f"class {name!r} has {len(paths)} file(s); cannot fill both splits"
            )
        gen.shuffle(paths)
        for i, path in enumerate(paths):
            splits[path] = TEST if i < n_test else TRAIN
    return DatasetManifest(manifest.class_names, manifest.files, splits, seed)


# --- synthetic generator ----------------------------------------------------

def hsv_to_rgb(h: float, s: float, v: float) -> tuple[float, float, float]:
    """h in degrees, s and v in [0, 1]."""
    h = h % 360.0
    c = v * s
    x = c * (1.0 - abs((h / 60.0) % 2.0 - 1.0))
    m = v - c
    sector = int(h // 60.0) % 6
    r, g, b = ((c, x, 0), (x, c, 0), (0, c, x), (0, x, c), (x, 0, c), (c, 0, x))[sector]
    return r + m, g + m, b + m


def class_hue_centers(num_classes: int) -> list[float]:
    return [360.0 * k / num_classes for k in range(num_classes)]


def hue_jitter_degrees(num_classes: int) -> float:
    """Jitter capped so adjacent classes keep at least 1.8*K degrees apart."""
    spacing = 360.0 / num_classes
    guarantee = 1.8 * num_classes
    return max(0.0, min(10.0, (spacing - guarantee) / 2.0))


def synth_image(class_index: int, num_classes: int, size: int, gen: SplitMix64) -> Tensor:
    hue = class_hue_centers(num_classes)[class_index]
    jitter = hue_jitter_degrees(num_classes)
    hue = hue + gen.uniform(-jitter, jitter)
    sat = gen.uniform(0.92, 1.0)
    val = gen.uniform(0.86, 0.94)
    cx = gen.uniform(0.46, 0.54) * size
    cy = gen.uniform(0.46, 0.54) * size
    rx = gen.uniform(0.31, 0.37) * size
    ry = gen.uniform(0.31, 0.37) * size
    base = gen.uniform(0.13, 0.17)

    noise = gen.uniforms(size * size, -0.02, 0.02).reshape(size, size)
    background = np.clip(base + noise, 0.0, 1.0)
    img = np.repeat(background[:, :, None], 3, axis=2)

    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    inside = ((xx + 0.5 - cx) / rx) ** 2 + ((yy + 0.5 - cy) / ry) ** 2 <= 1.0
    img[inside] = hsv_to_rgb(hue, sat, val)
    return Tensor(img.astype(np.float32))


def synth_generate(class_names, per_class: int, size: int, seed: int, out_dir) -> DatasetManifest:
    """Write root/<class_name>/NNNN.ppm for each class; same seed, same bytes."""
    class_names = list(class_names)
    if per_class < 1:
        raise InvalidArgumentError("per_class must be >= 1")
    if size < 4:
        raise InvalidArgumentError("size must be >= 4")
    if len(class_names) < 2:
        raise InvalidArgumentError("need at least two classes")
    root = Path(out_dir)
    root.mkdir(parents=True, exist_ok=True)
    files: dict[str, list[str]] = {}
    k = len(class_names)
    for idx, name in enumerate(sorted(class_names)):
        class_dir = root / name
        class_dir.mkdir(exist_ok=True)
        rels = []
        for i in range(per_class):
            gen = SplitMix64(derive_seed(seed, idx, i))
            image = synth_image(idx, k, size, gen)
            rel = f"{name}/{i:04d}.ppm"
            write_ppm(image, root / rel)
            rels.append(rel)
        files[name] = rels
    return DatasetManifest(sorted(class_names), files, seed=seed)


def mean_hue_degrees(image: Tensor) -> float:
    """Circular mean hue of saturated pixels; the oracle's feature."""
    rgb = image.data.astype(np.float64)
    mx = rgb.max(axis=2)
    mn = rgb.min(axis=2)
    delta = mx - mn
    saturated = delta > 0.15
    if not saturated.any():
        return 0.0
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        hue = np.where(
            mx == r, (g - b) / np.where(delta == 0, 1, delta) % 6.0,
            np.where(mx == g, (b - r) / np.where(delta == 0, 1, delta) + 2.0,
                     (r - g) / np.where(delta == 0, 1, delta) + 4.0),
        ) * 60.0
    angles = np.deg2rad(hue[saturated])
    return math.degrees(math.atan2(np.sin(angles).mean(), np.cos(angles).mean())) % 360.0
