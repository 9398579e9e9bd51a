"""Command line interface: synth, train, eval, bench and serve subcommands.

Exit codes: 0 success, 1 usage error, 2 runtime error. The eval and bench
report paths write the delimited files plus rendered PNG figures side by
side in the report directory.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .datasets import (
    CANONICAL_CLASSES,
    DatasetManifest,
    load_dataset,
    read_ppm,
    split_dataset,
    synth_generate,
    to_model_input,
)
from .evaluation import (
    EvaluationReport,
    PredictionRecord,
    bench_propagation,
    build_report,
    render_report,
    write_prediction_log,
)
from .errors import InvalidArgumentError
from .models import build_micro_mobilenet, forward, load_model, save_model
from .rng import SplitMix64
from .service import KioskServer, ServiceConfig
from .tensor import Tensor
from .training import TrainConfig, attach_head, extract_features, train_head

DEFAULT_MODEL_SEED = 42      # trunk initialization used by `train`
DEFAULT_TEST_FRACTION = 0.2
DEFAULT_SPLIT_SEED = 42      # fallback when eval finds no manifest
MANIFEST_NAME = "manifest.json"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="producescan",
                     description="Produce identification toolkit: data synthesis, "
                                 "head training, evaluation, benchmarking, kiosk service.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[], help="generate a synthetic produce dataset")
    p.add_argument("--out", required=True, help="output dataset directory")
    p.add_argument("--classes", default=",".join(CANONICAL_CLASSES),
                   help="comma-separated class names (default: the 10 produce classes)")
    p.add_argument("--per-class", type=int, default=50, help="images per class (default 50)")
    p.add_argument("--size", type=int, default=32, help="image side in pixels (default 32)")
    p.add_argument("--seed", type=int, default=42, help="generator seed (default 42)")

    p = sub.add_parser("train", help="train the softmax head on frozen trunk features")
    p.add_argument("--data", required=True, help="dataset directory (root/<class>/*.ppm)")
    p.add_argument("--out-model", required=True, help="path for the trained model file")
    p.add_argument("--epochs", type=int, default=300, help="training epochs (default 300)")
    p.add_argument("--lr", type=float, default=0.05, help="learning rate (default 0.05)")
    p.add_argument("--batch", type=int, default=32, help="mini-batch size (default 32)")
    p.add_argument("--seed", type=int, default=7,
                   help="shuffle/split seed (default 7); the trunk seed is fixed")

    p = sub.add_parser("eval", help="evaluate a model on the held-out split")
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--model", required=True, help="model file")
    p.add_argument("--log", default=None,
                   help="prediction log path (default <report>/predictions.jsonl)")
    p.add_argument("--report", default="report", help="report directory (default report/)")

    p = sub.add_parser("bench", help="measure propagation time with warm-up separation")
    p.add_argument("--model", required=True, help="model file")
    p.add_argument("--images", required=True,
                   help="a dataset/image directory, or an integer count of "
                        "seeded synthetic inputs")
    p.add_argument("--runs", type=int, default=5, help="independent runs (default 5)")
    p.add_argument("--out", default="bench-report", help="output directory (default bench-report/)")

    p = sub.add_parser("serve", help="run the kiosk HTTP service")
    p.add_argument("--model", required=True, help="model file")
    p.add_argument("--catalog", required=True, help="catalog JSON file")
    p.add_argument("--port", type=int, default=8000, help="listen port (default 8000)")
    p.add_argument("--labels", default="labels.jsonl",
                   help="label journal path (default labels.jsonl)")
    p.add_argument("--captures", default="captures",
                   help="stub camera directory of PPM files (default captures/)")
    p.add_argument("--host", default="127.0.0.1", help="bind address (default 127.0.0.1)")
    return parser


def _load_split(data_dir: str):
    """Dataset plus its persisted split; eval falls back to a default split."""
    manifest, images = load_dataset(data_dir)
    manifest_path = Path(data_dir) / MANIFEST_NAME
    if manifest_path.exists():
        persisted = DatasetManifest.from_json(manifest_path.read_text(encoding="utf-8"))
        if persisted.class_names == manifest.class_names and persisted.splits:
            return persisted, images
    manifest = split_dataset(manifest, DEFAULT_TEST_FRACTION, DEFAULT_SPLIT_SEED)
    return manifest, images


def _split_items(manifest, images, data_dir: str, split: str):
    by_path = {li.source: li for li in images}
    items = []
    for rel, class_index in manifest.split_files(split):
        li = by_path[str(Path(data_dir) / rel)]
        items.append((li.image, class_index))
    return items


def cmd_synth(args) -> int:
    classes = [c.strip() for c in args.classes.split(",") if c.strip()]
    manifest = synth_generate(classes, args.per_class, args.size, args.seed, args.out)
    total = sum(len(v) for v in manifest.files.values())
    print(f"wrote {total} images for {len(manifest.class_names)} classes under {args.out}")
    return 0


def cmd_train(args) -> int:
    manifest, images = load_dataset(args.data)
    manifest = split_dataset(manifest, DEFAULT_TEST_FRACTION, args.seed)
    (Path(args.data) / MANIFEST_NAME).write_text(manifest.to_json(), encoding="utf-8")

    model = build_micro_mobilenet(len(manifest.class_names), DEFAULT_MODEL_SEED,
                                  class_names=tuple(manifest.class_names))
    h, w, _ = model.spec.input_shape
    train_items = _split_items(manifest, images, args.data, "train")
    prepared = [to_model_input(img, h, w) for img, _ in train_items]
    labels = [c for _, c in train_items]
    features = extract_features(model, prepared, labels)
    config = TrainConfig(epochs=args.epochs, learning_rate=args.lr,
                         batch_size=args.batch, seed=args.seed)
    weights, bias, history = train_head(features, config)
    trained = attach_head(model, weights, bias)
    save_model(trained, args.out_model)
    print(f"trained on {len(train_items)} samples for {config.epochs} epochs; "
          f"final loss {history[-1]:.4f}")
    print(f"model written to {args.out_model}")
    return 0


def cmd_eval(args) -> int:
    model = load_model(args.model)
    manifest, images = _load_split(args.data)
    test_items = _split_items(manifest, images, args.data, "test")
    if not test_items:
        raise InvalidArgumentError("no test items in the split")
    h, w, _ = model.spec.input_shape
    records = []
    for index, (image, label) in enumerate(test_items):
        result = forward(model, to_model_input(image, h, w))
        records.append(PredictionRecord(true_class=label, ranking=result.ranking,
                                        latency_ms=result.latency_ms,
                                        run_index=0, sample_index=index))
    report_dir = Path(args.report)
    report_dir.mkdir(parents=True, exist_ok=True)
    log_path = args.log or str(report_dir / "predictions.jsonl")
    write_prediction_log(records, log_path)

    report = build_report(records, manifest.class_names)
    written = render_report(report, report_dir)
    from .figures import render_figures  # deferred: pulls in matplotlib
    written += render_figures(report, report_dir)
    top1, top3 = report.cmc[0], report.cmc[2] if len(report.cmc) >= 3 else report.cmc[-1]
    print(f"evaluated {len(records)} held-out samples: "
          f"top-1 {top1:.3f}, top-3 {top3:.3f}")
    print(f"prediction log: {log_path}")
    for path in written:
        print(f"report file: {path}")
    return 0


def _bench_images(spec_value: str, model) -> list[Tensor]:
    h, w, _ = model.spec.input_shape
    path = Path(spec_value)
    if path.is_dir():
        ppms = sorted(path.rglob("*.ppm"))
        if not ppms:
            raise InvalidArgumentError(f"no .ppm files under {path}")
        return [to_model_input(read_ppm(p), h, w) for p in ppms]
    try:
        count = int(spec_value)
    except ValueError:
        raise InvalidArgumentError(
            f"--images must be a directory or an integer count, got {spec_value!r}"
        ) from None
    if count < 1:
        raise InvalidArgumentError("--images count must be >= 1")
    gen = SplitMix64(0)
    images = []
    for _ in range(count):
        flat = gen.uniforms(h * w * 3, 0.0, 1.0).astype(np.float32)
        images.append(to_model_input(Tensor(flat.reshape(h, w, 3)), h, w))
    return images


def cmd_bench(args) -> int:
    model = load_model(args.model)
    images = _bench_images(args.images, model)
    records, stats = bench_propagation(model, images, args.runs)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_prediction_log(records, out / "samples.jsonl")
    (out / "timing.json").write_text(
        json.dumps(stats.to_doc(), sort_keys=True, indent=1) + "\n", encoding="utf-8")
    from .figures import render_timing_figure
    stub = EvaluationReport(class_names=model.spec.class_names,
                            confusion_top1=np.zeros((1, 1), dtype=np.int64),
                            topk_hits={}, cmc=np.zeros(1), cmc_by_class={},
                            markings={}, total=len(records), timing=stats)
    render_timing_figure(stub, out / "timing.png")
    print(f"{len(records)} samples over {args.runs} runs of {len(images)} images")
    print(f"overall mean {stats.overall_mean:.3f} ms; "
          f"first-sample mean {stats.first_sample_mean:.3f} ms; "
          f"steady-state mean {stats.steady_state_mean:.3f} ms")
    print(f"outputs in {out}")
    return 0


def cmd_serve(args) -> int:
    Path(args.captures).mkdir(parents=True, exist_ok=True)
    labels_parent = Path(args.labels).parent
    labels_parent.mkdir(parents=True, exist_ok=True)
    config = ServiceConfig(model_path=args.model, catalog_path=args.catalog,
                           port=args.port, labels_path=args.labels,
                           captures_dir=args.captures, host=args.host)
    server = KioskServer(config)
    print(f"kiosk service listening on {server.url}")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        server.stop()
    return 0


_COMMANDS = {
    "synth": cmd_synth,
    "train": cmd_train,
    "eval": cmd_eval,
    "bench": cmd_bench,
    "serve": cmd_serve,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    try:
        return _COMMANDS[args.command](args)
    except (InvalidArgumentError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
