"""Binary-classification metrics for detector benchmarking.

Fake is the positive class throughout: a true positive is a fake sample
predicted fake, and ``accuracy_real`` is therefore the true-negative rate.
Scores are fake-probabilities in [0, 1] and a sample is predicted fake when
its score is >= the decision threshold (ties go to fake).

All functions are pure over immutable record lists.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.stats import rankdata

REAL, FAKE = "real", "fake"
DEFAULT_THRESHOLD = 0.5

# Fixed column order used by metrics.txt and the benchmark comparison table.
HEADLINE_METRICS = (
    "accuracy",
    "accuracy_real",
    "accuracy_fake",
    "auc",
    "f1",
    "precision",
    "recall",
)


@dataclass(frozen=True)
class PredictionRecord:
    """One scored sample: id, fake-probability, truth, method tag, latency."""

    sample_id: str
    score: float
    true_label: str
    method: str = "original"
    latency_seconds: float = 0.0

    def __post_init__(self) -> None:
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score must be in [0, 1], got {self.score}")
        if self.true_label not in (REAL, FAKE):
            raise ValueError(f"true_label must be 'real' or 'fake', got {self.true_label!r}")
        if self.latency_seconds < 0.0:
            raise ValueError(f"latency must be >= 0, got {self.latency_seconds}")


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


@dataclass(frozen=True)
class ScalarMetrics:
    """Headline scalar metrics derived from a confusion matrix.

    Metrics whose denominator is zero are reported as 0.0 and named in
    ``degenerate`` so reports stay serializable and comparable.
    """

    accuracy: float
    accuracy_real: float
    accuracy_fake: float
    precision: float
    recall: float
    f1: float
    degenerate: tuple[str, ...] = ()


@dataclass(frozen=True)
class TimingStats:
    total_seconds: float
    count: int
    mean_seconds_per_sample: float


@dataclass
class MetricsReport:
    """Everything the harness reports for one model on one prediction set."""

    model: str
    threshold: float
    confusion: ConfusionMatrix
    accuracy: float
    accuracy_real: float
    accuracy_fake: float
    precision: float
    recall: float
    f1: float
    auc: float
    roc_points: list[tuple[float, float]]
    fn_by_method: dict[str, int]
    timing: TimingStats
    degenerate: tuple[str, ...] = ()

    def headline(self) -> dict[str, float]:
        return {name: getattr(self, name) for name in HEADLINE_METRICS}


def confusion(records: Sequence[PredictionRecord], threshold: float) -> ConfusionMatrix:
    """Count (prediction, truth) outcomes; predict fake iff score >= threshold."""
    if not records:
        raise ValueError("confusion: no records")
    tp = fp = tn = fn = 0
    for r in records:
        predicted_fake = r.score >= threshold
        if r.true_label == FAKE:
            if predicted_fake:
                tp += 1
            else:
                fn += 1
        else:
            if predicted_fake:
                fp += 1
            else:
                tn += 1
    return ConfusionMatrix(tp=tp, fp=fp, tn=tn, fn=fn)


def _ratio(num: int, den: int, name: str, degenerate: list[str]) -> float:
    if den == 0:
        degenerate.append(name)
        return 0.0
    return num / den


def scalar_metrics(cm: ConfusionMatrix) -> ScalarMetrics:
    """Accuracy, per-class accuracies, precision, recall and F1 from counts."""
    if cm.total == 0:
        raise ValueError("scalar_metrics: empty confusion matrix")
    degenerate: list[str] = []
    accuracy = (cm.tp + cm.tn) / cm.total
    accuracy_fake = _ratio(cm.tp, cm.tp + cm.fn, "accuracy_fake", degenerate)
    accuracy_real = _ratio(cm.tn, cm.tn + cm.fp, "accuracy_real", degenerate)
    precision = _ratio(cm.tp, cm.tp + cm.fp, "precision", degenerate)
    recall = _ratio(cm.tp, cm.tp + cm.fn, "recall", degenerate)
    if precision + recall == 0.0:
        degenerate.append("f1")
        f1 = 0.0
    else:
        f1 = 2.0 * precision * recall / (precision + recall)
    return ScalarMetrics(
        accuracy=accuracy,
        accuracy_real=accuracy_real,
        accuracy_fake=accuracy_fake,
        precision=precision,
        recall=recall,
        f1=f1,
        degenerate=tuple(degenerate),
    )


def roc_curve_points(
    records: Sequence[PredictionRecord],
) -> list[tuple[float, float]]:
    """(fpr, tpr) points of the threshold-swept ROC curve, (0,0) to (1,1)."""
    n_fake = sum(1 for r in records if r.true_label == FAKE)
    n_real = len(records) - n_fake
    if n_fake == 0 or n_real == 0:
        raise ValueError("ROC undefined: records contain a single class")
    scores = np.array([r.score for r in records])
    is_fake = np.array([r.true_label == FAKE for r in records])
    order = np.argsort(-scores, kind="stable")
    scores, is_fake = scores[order], is_fake[order]
    points = [(0.0, 0.0)]
    tp = fp = 0
    for i in range(len(records)):
        tp += int(is_fake[i])
        fp += int(not is_fake[i])
        # emit one point per distinct threshold (tie groups collapse)
        if i + 1 == len(records) or scores[i + 1] != scores[i]:
            points.append((fp / n_real, tp / n_fake))
    return points


def roc_auc(
    records: Sequence[PredictionRecord],
) -> tuple[float, list[tuple[float, float]]]:
    """Area under the ROC curve plus the curve itself.

    The AUC is the rank statistic (probability that a random fake outscores a
    random real, ties counted 1/2) and is cross-checked on every call against
    trapezoidal integration of the swept curve; the two routes must agree to
    1e-9.
    """
    points = roc_curve_points(records)
    scores = np.array([r.score for r in records])
    is_fake = np.array([r.true_label == FAKE for r in records])
    n_fake = int(is_fake.sum())
    n_real = len(records) - n_fake
    ranks = rankdata(scores)  # average ranks handle ties as 1/2
    u = float(ranks[is_fake].sum()) - n_fake * (n_fake + 1) / 2.0
    auc_rank = u / (n_fake * n_real)
    fpr = np.array([p[0] for p in points])
    tpr = np.array([p[1] for p in points])
    auc_trap = float(np.trapezoid(tpr, fpr))
    if abs(auc_rank - auc_trap) > 1e-9:
        raise AssertionError(
            f"AUC routes disagree: rank {auc_rank!r} vs trapezoid {auc_trap!r}"
        )
    return auc_rank, points


def fn_by_method(
    records: Iterable[PredictionRecord], threshold: float
) -> dict[str, int]:
    """False negatives (fakes scored below threshold) counted per method."""
    counts: dict[str, int] = {}
    for r in records:
        if r.true_label == FAKE and r.score < threshold:
            counts[r.method] = counts.get(r.method, 0) + 1
    return counts


def timing_stats(records: Sequence[PredictionRecord]) -> TimingStats:
    """Total wall time, sample count and mean seconds per sample."""
    if not records:
        raise ValueError("timing_stats: no records")
    total = sum(r.latency_seconds for r in records)
    return TimingStats(
        total_seconds=total,
        count=len(records),
        mean_seconds_per_sample=total / len(records),
    )


def build_report(
    records: Sequence[PredictionRecord],
    model: str = "model",
    threshold: float = DEFAULT_THRESHOLD,
) -> MetricsReport:
    """Assemble the full MetricsReport for one prediction set."""
    cm = confusion(records, threshold)
    sm = scalar_metrics(cm)
    auc, points = roc_auc(records)
    return MetricsReport(
        model=model,
        threshold=threshold,
        confusion=cm,
        accuracy=sm.accuracy,
        accuracy_real=sm.accuracy_real,
        accuracy_fake=sm.accuracy_fake,
        precision=sm.precision,
        recall=sm.recall,
        f1=sm.f1,
        auc=auc,
        roc_points=points,
        fn_by_method=fn_by_method(records, threshold),
        timing=timing_stats(records),
        degenerate=sm.degenerate,
    )


# ---------------------------------------------------------------------------
# Prediction-record files (line-delimited JSON)
# ---------------------------------------------------------------------------

_RECORD_FIELDS = ("sample_id", "score", "true_label", "method", "latency_seconds")


def write_records(records: Iterable[PredictionRecord], path: str | Path) -> None:
    path = Path(path)
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            row = {k: getattr(r, k) for k in _RECORD_FIELDS}
            fh.write(json.dumps(row) + "\n")


def read_records(path: str | Path) -> list[PredictionRecord]:
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                row = json.loads(line)
                records.append(PredictionRecord(**row))
            except (json.JSONDecodeError, TypeError, ValueError) as exc:
                raise ValueError(f"{path}:{lineno}: bad prediction record: {exc}") from exc
    return records


# ---------------------------------------------------------------------------
# Report emission
# ---------------------------------------------------------------------------

REPORT_JSON = "report.json"
METRICS_TXT = "metrics.txt"
ROC_TSV = "roc.tsv"


def emit_report(report: MetricsReport, out_dir: str | Path) -> dict[str, Path]:
    """Write the report as machine-readable JSON, a flat metrics table and
    plot-ready ROC points. Returns the paths written.
    """
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        paths = {
            "report": out_dir / REPORT_JSON,
            "metrics": out_dir / METRICS_TXT,
            "roc": out_dir / ROC_TSV,
        }
        payload = asdict(report)
        payload["degenerate"] = list(report.degenerate)
        with open(paths["report"], "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2)
            fh.write("\n")
        with open(paths["metrics"], "w", encoding="utf-8") as fh:
            fh.write(f"model: {report.model}\n")
            fh.write(f"threshold: {report.threshold}\n")
            for name in HEADLINE_METRICS:
                fh.write(f"{name}: {getattr(report, name):.6f}\n")
            cm = report.confusion
            fh.write(f"confusion: tp={cm.tp} fp={cm.fp} tn={cm.tn} fn={cm.fn}\n")
            fh.write(
                "timing: total_s=%.6f n=%d mean_s_per_sample=%.6f\n"
                % (
                    report.timing.total_seconds,
                    report.timing.count,
                    report.timing.mean_seconds_per_sample,
                )
            )
            for method in sorted(report.fn_by_method):
                fh.write(f"fn[{method}]: {report.fn_by_method[method]}\n")
        with open(paths["roc"], "w", encoding="utf-8") as fh:
            fh.write("fpr\ttpr\n")
            for fpr, tpr in report.roc_points:
                fh.write(f"{fpr!r}\t{tpr!r}\n")
    except OSError as exc:
        raise OSError(f"failed writing report under {out_dir}: {exc}") from exc
    return paths


def read_report(path: str | Path) -> MetricsReport:
    """Re-read a report.json (or its directory) into a MetricsReport."""
    path = Path(path)
    if path.is_dir():
        path = path / REPORT_JSON
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    return MetricsReport(
        model=payload["model"],
        threshold=payload["threshold"],
        confusion=ConfusionMatrix(**payload["confusion"]),
        accuracy=payload["accuracy"],
        accuracy_real=payload["accuracy_real"],
        accuracy_fake=payload["accuracy_fake"],
        precision=payload["precision"],
        recall=payload["recall"],
        f1=payload["f1"],
        auc=payload["auc"],
        roc_points=[(p[0], p[1]) for p in payload["roc_points"]],
        fn_by_method=payload["fn_by_method"],
        timing=TimingStats(**payload["timing"]),
        degenerate=tuple(payload["degenerate"]),
    )
