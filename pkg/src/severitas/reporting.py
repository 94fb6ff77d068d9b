"""Confusion matrices, per-class metrics, importance and distribution reports.

Counts are kept as integers and metrics derived from them at full
precision; percentages are rendered with two decimals only at the
formatting edge.  Per-class "accuracy" is one-vs-rest accuracy, published
alongside (never merged with) the overall accuracy.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import IngestError
from .ingest import SEVERITY_CLASSES, Dataset, RawTable
from .training import cross_entropy_loss, model_forward

N_CLASSES = len(SEVERITY_CLASSES)


@dataclass
class ConfusionMatrix:
    """3x3 counts; rows = true class, columns = predicted, KA/BC/O order."""

    counts: np.ndarray

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def row_normalized(self) -> np.ndarray:
        sums = self.counts.sum(axis=1, keepdims=True)
        with np.errstate(invalid="ignore"):
            out = np.where(sums > 0, self.counts / np.maximum(sums, 1), 0.0)
        return out

    def to_csv(self, path, normalized: bool = False) -> None:
        data = self.row_normalized() if normalized else self.counts
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["true\\pred", *SEVERITY_CLASSES])
            for i, cls in enumerate(SEVERITY_CLASSES):
                row = [repr(float(v)) if normalized else int(v) for v in data[i]]
                writer.writerow([cls, *row])


def confusion(preds, labels) -> ConfusionMatrix:
    """Count matrix with entry (i, j) = samples of true class i predicted j."""
    preds = np.asarray(preds)
    labels = np.asarray(labels)
    if preds.shape != labels.shape:
        raise ValueError(f"predictions ({preds.shape}) and labels ({labels.shape}) differ in length")
    if preds.size and not (set(np.unique(preds)) | set(np.unique(labels))) <= set(range(N_CLASSES)):
        raise ValueError(f"class indices must lie in [0, {N_CLASSES})")
    counts = np.zeros((N_CLASSES, N_CLASSES), dtype=np.int64)
    for t, p in zip(labels, preds):
        counts[t, p] += 1
    return ConfusionMatrix(counts=counts)


@dataclass
class ClassMetrics:
    """Per-class precision/recall/F1/one-vs-rest accuracy plus overall accuracy.

    Values are fractions in [0, 1]; ``degenerate`` flags metrics whose
    denominator was zero (reported as 0 rather than raising).
    """

    per_class: dict
    overall_accuracy: float
    degenerate: dict = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        return {
            "per_class": self.per_class,
            "overall_accuracy": self.overall_accuracy,
            "degenerate": self.degenerate,
        }


def classwise_metrics(cm: ConfusionMatrix) -> ClassMetrics:
    counts = cm.counts
    total = cm.total
    per_class = {}
    degenerate: dict[str, list] = {}
    for i, cls in enumerate(SEVERITY_CLASSES):
        tp = int(counts[i, i])
        col = int(counts[:, i].sum())
        row = int(counts[i, :].sum())
        flags = []
        precision = tp / col if col else 0.0
        if not col:
            flags.append("precision")
        recall = tp / row if row else 0.0
        if not row:
            flags.append("recall")
        if precision + recall > 0:
            f1 = 2 * precision * recall / (precision + recall)
        else:
            f1 = 0.0
            flags.append("f1")
        tn = total - row - col + tp
        ovr = (tp + tn) / total if total else 0.0
        if not total:
            flags.append("ovr_accuracy")
        per_class[cls] = {"precision": precision, "recall": recall, "f1": f1,
                          "ovr_accuracy": ovr}
        if flags:
            degenerate[cls] = flags
    overall = float(np.trace(counts)) / total if total else 0.0
    return ClassMetrics(per_class=per_class, overall_accuracy=overall, degenerate=degenerate)


def format_metrics_table(model: str, metrics: ClassMetrics) -> str:
    """Rows of per-class percentages with two decimals, one line per class."""
    lines = [f"{'Model':10s} {'Class':5s} {'Precision':>10s} {'Recall':>8s} {'F1':>8s} {'OvR-Acc':>8s}"]
    for cls in SEVERITY_CLASSES:
        m = metrics.per_class[cls]
        lines.append(f"{model:10s} {cls:5s} {100 * m['precision']:10.2f} {100 * m['recall']:8.2f} "
                     f"{100 * m['f1']:8.2f} {100 * m['ovr_accuracy']:8.2f}")
    lines.append(f"{model:10s} overall accuracy: {100 * metrics.overall_accuracy:.2f}%")
    return "\n".join(lines)


@dataclass
class EvalResult:
    metrics: ClassMetrics
    cm: ConfusionMatrix
    mean_log_loss: float

    def to_json_dict(self, model: str, split: str) -> dict:
        return {
            "model": model,
            "split": split,
            "per_class": self.metrics.per_class,
            "overall_accuracy": self.metrics.overall_accuracy,
            "mean_log_loss": self.mean_log_loss,
            "degenerate": self.metrics.degenerate,
            "confusion": self.cm.counts.tolist(),
        }


def predict(kind: str, params, X: np.ndarray) -> np.ndarray:
    """Eval-mode argmax predictions; logit ties go to the lowest class index."""
    logits = model_forward(kind, X, params, mode="eval").data
    return logits.argmax(axis=1)


def evaluate_model(kind: str, params, dataset: Dataset) -> EvalResult:
    """Metrics over one split: confusion counts, class metrics, mean log loss."""
    logits = model_forward(kind, dataset.X, params, mode="eval").data
    preds = logits.argmax(axis=1)
    cm = confusion(preds, dataset.y)
    loss = float(cross_entropy_loss(logits, dataset.y).data)
    return EvalResult(metrics=classwise_metrics(cm), cm=cm, mean_log_loss=loss)


def permutation_importance(kind: str, params, dataset: Dataset, field_name: str,
                           rng: np.random.Generator, repeats: int = 5) -> float:
    """Mean accuracy drop when one field's encoded block is shuffled across rows.

    The block is permuted as a unit so one-hot rows stay valid; a positive
    value means the model relied on the field.
    """
    spans = {f.name: (f.start, f.stop) for f in params.fields}
    if field_name not in spans:
        raise ValueError(f"unknown field {field_name!r}; have {sorted(spans)}")
    start, stop = spans[field_name]
    base_acc = float((predict(kind, params, dataset.X) == dataset.y).mean())
    drops = []
    for _ in range(repeats):
        X = dataset.X.copy()
        X[:, start:stop] = X[rng.permutation(len(X)), start:stop]
        acc = float((predict(kind, params, X) == dataset.y).mean())
        drops.append(base_acc - acc)
    return float(np.mean(drops))


def severity_distribution_report(raw: RawTable, year_column: str, label_column: str):
    """Per-(year, class) counts in KA/BC/O order, ready for CSV export."""
    if year_column not in raw.columns:
        raise ValueError(f"year column {year_column!r} not present")
    rows = []
    counts: dict[tuple, int] = {}
    for i, r in enumerate(raw.rows):
        cell = r[year_column]
        try:
            year = int(str(cell).strip())
        except ValueError:
            raise IngestError(f"line {raw.line_of(i)}: year cell {cell!r} is not an integer") from None
        label = r[label_column]
        counts[(year, label)] = counts.get((year, label), 0) + 1
    for year in sorted({y for y, _ in counts}):
        for cls in SEVERITY_CLASSES:
            if (year, cls) in counts:
                rows.append({"year": year, "class": cls, "count": counts[(year, cls)]})
    return rows


def save_distribution_csv(rows, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["year", "class", "count"])
        for r in rows:
            writer.writerow([r["year"], r["class"], r["count"]])


def save_metrics_json(result: EvalResult, model: str, split: str, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(result.to_json_dict(model, split), fh, indent=2, sort_keys=True)
        fh.write("\n")
