"""Accuracy and latency evaluation: prediction logs, confusion matrix,
top-k accuracy, CMC curves, per-class markings, and the warm-up-aware
propagation benchmark.

Logs persist as JSON lines, one object per classification:
``{"true": int, "ranking": [{"class": int, "score": float}...],
"latency_ms": float, "run": int, "index": int}``. Reports are written as
CSV/JSON plus a plain-text summary and are byte-stable for a given report.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvalidArgumentError, ParseError
from .models import Model, forward
from .tensor import Tensor

UNLABELED = -1

GREEN = "green"
BLUE = "blue"
RED = "red"
UNTESTED = "untested"


@dataclass(frozen=True)
class PredictionRecord:
    """One logged classification: truth, full ranking, latency, provenance."""

    true_class: int
    ranking: tuple[tuple[int, float], ...]
    latency_ms: float
    run_index: int = 0
    sample_index: int = 0

    def __post_init__(self):
        object.__setattr__(self, "ranking", tuple((int(c), float(s)) for c, s in self.ranking))
        k = len(self.ranking)
        if k < 1:
            raise InvalidArgumentError("ranking must not be empty")
        if sorted(c for c, _ in self.ranking) != list(range(k)):
            raise InvalidArgumentError("ranking must be a permutation of all classes")
        scores = [s for _, s in self.ranking]
        if any(a < b for a, b in zip(scores, scores[1:])):
            raise InvalidArgumentError("ranking scores must be non-increasing")
        if self.latency_ms < 0:
            raise InvalidArgumentError("latency must be nonnegative")
        if self.true_class != UNLABELED and not 0 <= self.true_class < k:
            raise InvalidArgumentError(f"true class {self.true_class} outside 0..{k - 1}")

    @property
    def num_classes(self) -> int:
        return len(self.ranking)

    def rank_of_truth(self) -> int:
        """0-based position of the true class in the ranking."""
        for pos, (c, _) in enumerate(self.ranking):
            if c == self.true_class:
                return pos
        raise InvalidArgumentError("record has no labeled truth")


@dataclass
class TimingStats:
    per_run_means: list[float]
    overall_mean: float
    first_sample_mean: float
    steady_state_mean: float

    def to_doc(self) -> dict:
        return {
            "per_run_means": self.per_run_means,
            "overall_mean": self.overall_mean,
            "first_sample_mean": self.first_sample_mean,
            "steady_state_mean": self.steady_state_mean,
        }


@dataclass
class EvaluationReport:
    class_names: tuple[str, ...]
    confusion_top1: np.ndarray
    topk_hits: dict[int, int]
    cmc: np.ndarray
    cmc_by_class: dict[int, np.ndarray]
    markings: dict[int, str]
    total: int
    timing: TimingStats | None = field(default=None)


def _check_log(log: list[PredictionRecord]) -> int:
    if not log:
        raise InvalidArgumentError("prediction log is empty")
    k = log[0].num_classes
    for rec in log:
        if rec.num_classes != k:
            raise InvalidArgumentError(
                f"inconsistent class count: {rec.num_classes} vs {k}"
            )
        if rec.true_class == UNLABELED:
            raise InvalidArgumentError("log contains unlabeled records")
    return k


def confusion_matrix(log: list[PredictionRecord]) -> np.ndarray:
    """K x K tally; rows are true classes, columns the rank-1 prediction."""
    k = _check_log(log)
    matrix = np.zeros((k, k), dtype=np.int64)
    for rec in log:
        matrix[rec.true_class, rec.ranking[0][0]] += 1
    return matrix


def topk_accuracy(log: list[PredictionRecord], k: int) -> float:
    """Fraction of records whose truth appears among the first k entries."""
    classes = _check_log(log)
    if not 1 <= k <= classes:
        raise InvalidArgumentError(f"k must be in 1..{classes}, got {k}")
    hits = sum(1 for rec in log if rec.rank_of_truth() < k)
    return hits / len(log)


def cmc_curve(log: list[PredictionRecord], class_filter: int | None = None) -> np.ndarray:
    """Entry r: fraction of records with truth within the top r+1 ranks."""
    k = _check_log(log)
    records = log if class_filter is None else [r for r in log if r.true_class == class_filter]
    if not records:
        raise InvalidArgumentError(f"no records for class {class_filter}")
    counts = np.zeros(k, dtype=np.int64)
    for rec in records:
        counts[rec.rank_of_truth()] += 1
    return np.cumsum(counts) / len(records)


def class_markings(confusion: np.ndarray) -> dict[int, str]:
    """Rank-1 accuracy bands: green above 0.9, blue above 0.5, red at or
    below 0.5 (exactly half right is red); untested rows are reported apart."""
    confusion = np.asarray(confusion)
    if confusion.ndim != 2 or confusion.shape[0] != confusion.shape[1] or confusion.shape[0] < 1:
        raise InvalidArgumentError("confusion matrix must be square and nonempty")
    markings = {}
    for i in range(confusion.shape[0]):
        row_sum = int(confusion[i].sum())
        if row_sum == 0:
            markings[i] = UNTESTED
            continue
        accuracy = confusion[i, i] / row_sum
        if accuracy > 0.9:
            markings[i] = GREEN
        elif accuracy > 0.5:
            markings[i] = BLUE
        else:
            markings[i] = RED
    return markings


def build_report(log: list[PredictionRecord], class_names,
                 timing: TimingStats | None = None) -> EvaluationReport:
    k = _check_log(log)
    class_names = tuple(class_names)
    if len(class_names) != k:
        raise InvalidArgumentError(
            f"{len(class_names)} class names for {k}-class log"
        )
    confusion = confusion_matrix(log)
    rank_counts = np.zeros(k, dtype=np.int64)
    for rec in log:
        rank_counts[rec.rank_of_truth()] += 1
    hits = np.cumsum(rank_counts)
    present = sorted({rec.true_class for rec in log})
    return EvaluationReport(
        class_names=class_names,
        confusion_top1=confusion,
        topk_hits={i + 1: int(hits[i]) for i in range(k)},
        cmc=hits / len(log),
        cmc_by_class={c: cmc_curve(log, c) for c in present},
        markings=class_markings(confusion),
        total=len(log),
        timing=timing,
    )


def slowdown_ratio(mean_a: float, mean_b: float) -> float:
    """How many times slower mean_a is than mean_b."""
    if mean_b <= 0:
        raise InvalidArgumentError("reference mean must be positive")
    return mean_a / mean_b


def bench_propagation(model: Model, images: list[Tensor], runs: int,
                      labels=None, clock=time.perf_counter):
    """Forward every image ``runs`` times, one at a time, logging latency.

    The first sample of each run is reported separately from the steady
    state so cold-start effects stay visible. Returns (records, TimingStats);
    sample count is always runs * len(images).
    """
    if runs < 1:
        raise InvalidArgumentError("runs must be >= 1")
    if not images:
        raise InvalidArgumentError("images must be nonempty")
    if labels is None:
        labels = [UNLABELED] * len(images)
    if len(labels) != len(images):
        raise InvalidArgumentError("labels length must match images")
    records: list[PredictionRecord] = []
    per_run_means = []
    firsts = []
    steady: list[float] = []
    for run in range(runs):
        run_latencies = []
        for index, (image, label) in enumerate(zip(images, labels)):
            result = forward(model, image, clock=clock)
            records.append(PredictionRecord(
                true_class=label,
                ranking=result.ranking,
                latency_ms=result.latency_ms,
                run_index=run,
                sample_index=index,
            ))
            run_latencies.append(result.latency_ms)
        per_run_means.append(float(np.mean(run_latencies)))
        firsts.append(run_latencies[0])
        steady.extend(run_latencies[1:])
    stats = TimingStats(
        per_run_means=per_run_means,
        overall_mean=float(np.mean([r.latency_ms for r in records])),
        first_sample_mean=float(np.mean(firsts)),
        steady_state_mean=float(np.mean(steady)) if steady else 0.0,
    )
    return records, stats


# --- log persistence --------------------------------------------------------

def write_prediction_log(records: list[PredictionRecord], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps({
                "true": rec.true_class,
                "ranking": [{"class": c, "score": s} for c, s in rec.ranking],
                "latency_ms": rec.latency_ms,
                "run": rec.run_index,
                "index": rec.sample_index,
            }, separators=(",", ":")) + "\n")


def read_prediction_log(path) -> list[PredictionRecord]:
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                doc = json.loads(line)
                records.append(PredictionRecord(
                    true_class=doc["true"],
                    ranking=tuple((e["class"], e["score"]) for e in doc["ranking"]),
                    latency_ms=doc["latency_ms"],
                    run_index=doc.get("run", 0),
                    sample_index=doc.get("index", 0),
                ))
            except (KeyError, TypeError, json.JSONDecodeError) as exc:
                raise ParseError(f"bad log line {line_no}: {exc}") from exc
    return records


# --- report rendering -------------------------------------------------------

def _fmt(x: float) -> str:
    return f"{x:.6f}"


def render_report(report: EvaluationReport, out_dir) -> list[str]:
    """Write the delimited report files; byte-stable for identical reports.

    Returns the paths written: confusion_top1.csv, markings.csv, cmc.csv,
    summary.txt, and timing.json when timing stats are present.
    """
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create report directory {out}: {exc}") from exc
    names = report.class_names
    written = []

    path = out / "confusion_top1.csv"
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("true\\predicted," + ",".join(names) + "\n")
        for i, name in enumerate(names):
            fh.write(name + "," + ",".join(str(int(v)) for v in report.confusion_top1[i]) + "\n")
    written.append(str(path))

    path = out / "markings.csv"
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("class,rank1_accuracy,marking\n")
        for i, name in enumerate(names):
            row = report.confusion_top1[i]
            total = int(row.sum())
            acc = _fmt(row[i] / total) if total else ""
            fh.write(f"{name},{acc},{report.markings[i]}\n")
    written.append(str(path))

    path = out / "cmc.csv"
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("class," + ",".join(f"rank{r + 1}" for r in range(len(names))) + "\n")
        for i, name in enumerate(names):
            if i in report.cmc_by_class:
                fh.write(name + "," + ",".join(_fmt(v) for v in report.cmc_by_class[i]) + "\n")
            else:
                fh.write(name + "," + ",".join("" for _ in names) + "\n")
        fh.write("overall," + ",".join(_fmt(v) for v in report.cmc) + "\n")
    written.append(str(path))

    if report.timing is not None:
        path = out / "timing.json"
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(report.timing.to_doc(), fh, sort_keys=True, indent=1)
            fh.write("\n")
        written.append(str(path))

    path = out / "summary.txt"
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"samples: {report.total}\n")
        fh.write(f"top-1 accuracy: {_fmt(report.cmc[0])}\n")
        if len(report.cmc) >= 3:
            fh.write(f"top-3 accuracy: {_fmt(report.cmc[2])}\n")
        fh.write("per-class markings:\n")
        for i, name in enumerate(names):
            fh.write(f"  {name}: {report.markings[i]}\n")
        if report.timing is not None:
            fh.write(f"overall mean latency: {_fmt(report.timing.overall_mean)} ms\n")
            fh.write(f"first-sample mean latency: {_fmt(report.timing.first_sample_mean)} ms\n")
            fh.write(f"steady-state mean latency: {_fmt(report.timing.steady_state_mean)} ms\n")
    written.append(str(path))
    return written
