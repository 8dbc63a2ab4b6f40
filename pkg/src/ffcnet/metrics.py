"""Classification metrics: confusion matrix, precision/recall/F1, heatmap.

Aggregates default to the support-weighted average.  With those weights the
aggregate recall is algebraically identical to accuracy:

    sum_c (n_c / N) * (TP_c / n_c) = sum_c TP_c / N = trace / total

so equal accuracy and recall columns in a report are expected, not a bug.
A macro average (unweighted mean over classes) is available via `average`.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .tensor import FfcnetError


class MetricsError(FfcnetError, ValueError):
    pass


@dataclass
class ConfusionMatrix:
    """Rows are true classes, columns predicted classes."""

    class_names: list
    counts: np.ndarray = field(default=None)

    def __post_init__(self):
        c = len(self.class_names)
        if c < 2:
            raise MetricsError("confusion matrix needs at least 2 classes")
        if self.counts is None:
            self.counts = np.zeros((c, c), dtype=np.int64)
        else:
            self.counts = np.asarray(self.counts, dtype=np.int64)
            if self.counts.shape != (c, c):
                raise MetricsError(
                    f"counts shape {self.counts.shape} does not match {c} classes")
            if np.any(self.counts < 0):
                raise MetricsError("confusion matrix counts must be non-negative")

    @property
    def num_classes(self) -> int:
        return len(self.class_names)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def update(self, true_label: int, predicted_label: int) -> "ConfusionMatrix":
        c = self.num_classes
        if not (0 <= true_label < c and 0 <= predicted_label < c):
            raise MetricsError(
                f"label pair ({true_label}, {predicted_label}) outside [0, {c})")
        self.counts[true_label, predicted_label] += 1
        return self

    def update_batch(self, true_labels, predicted_labels) -> "ConfusionMatrix":
        true_labels = np.asarray(true_labels)
        predicted_labels = np.asarray(predicted_labels)
        if true_labels.shape != predicted_labels.shape:
            raise MetricsError("label arrays differ in shape")
        for t, p in zip(true_labels.ravel(), predicted_labels.ravel()):
            self.update(int(t), int(p))
        return self

    def merge(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        """Count-wise addition; supports parallel evaluation shards."""
        if other.class_names != self.class_names:
            raise MetricsError("cannot merge confusion matrices over different classes")
        self.counts += other.counts
        return self


def summarize(cm: ConfusionMatrix, average: str = "weighted") -> dict:
    """Accuracy plus per-class and aggregate precision/recall/F1.

    Zero-support classes are excluded from the aggregate (with a warning)
    rather than counted as zero, which would silently deflate every score.
    Values are fractions in [0, 1]; multiply by 100 for report form.
    """
    if average not in ("weighted", "macro"):
        raise MetricsError(f"unknown average mode {average!r}")
    total = cm.total
    if total == 0:
        raise MetricsError("cannot summarize an empty confusion matrix")
    counts = cm.counts.astype(np.float64)
    tp = np.diag(counts)
    support = counts.sum(axis=1)  # row sums: true-class sample counts
    predicted = counts.sum(axis=0)

    per_class = []
    for c in range(cm.num_classes):
        prec = tp[c] / predicted[c] if predicted[c] > 0 else 0.0
        rec = tp[c] / support[c] if support[c] > 0 else float("nan")
        f1 = 2 * prec * rec / (prec + rec) if prec + rec > 0 else 0.0
        per_class.append({
            "class": cm.class_names[c],
            "support": int(support[c]),
            "precision": float(prec),
            "recall": float(rec),
            "f1": float(f1),
        })

    live = support > 0
    if not np.all(live):
        dead = [cm.class_names[i] for i in np.flatnonzero(~live)]
        warnings.warn(
            f"classes with zero support excluded from aggregate: {dead}",
            stacklevel=2)
    precs = np.array([p["precision"] for p in per_class])[live]
    recs = np.array([p["recall"] for p in per_class])[live]
    f1s = np.array([p["f1"] for p in per_class])[live]
    if average == "weighted":
        w = support[live] / support[live].sum()
    else:
        w = np.full(live.sum(), 1.0 / live.sum())
    return {
        "accuracy": float(tp.sum() / total),
        "precision": float(np.sum(w * precs)),
        "recall": float(np.sum(w * recs)),
        "f1": float(np.sum(w * f1s)),
        "per_class": per_class,
        "average": average,
        "total": total,
    }


def row_normalize(cm: ConfusionMatrix) -> np.ndarray:
    """Row percentages to 2 decimals; zero rows stay zero."""
    counts = cm.counts.astype(np.float64)
    sums = counts.sum(axis=1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        pct = np.where(sums > 0, counts / sums * 100.0, 0.0)
    return np.round(pct, 2)


# ---------------------------------------------------------------------------
# report emitters

def summary_text(summary: dict) -> str:
    lines = [
        f"samples   {summary['total']}",
        f"accuracy  {summary['accuracy'] * 100:.2f}",
        f"precision {summary['precision'] * 100:.2f}  ({summary['average']})",
        f"recall    {summary['recall'] * 100:.2f}  ({summary['average']})",
        f"f1        {summary['f1'] * 100:.2f}  ({summary['average']})",
        "",
        "class  support  precision  recall  f1",
    ]
    for p in summary["per_class"]:
        rec = "nan" if np.isnan(p["recall"]) else f"{p['recall'] * 100:.2f}"
        lines.append(
            f"{p['class']}  {p['support']}  {p['precision'] * 100:.2f}  "
            f"{rec}  {p['f1'] * 100:.2f}")
    return "\n".join(lines) + "\n"


def counts_csv(cm: ConfusionMatrix) -> str:
    header = "true\\pred," + ",".join(cm.class_names)
    rows = [header]
    for name, row in zip(cm.class_names, cm.counts):
        rows.append(name + "," + ",".join(str(int(v)) for v in row))
    return "\n".join(rows) + "\n"


def percent_csv(cm: ConfusionMatrix) -> str:
    header = "true\\pred," + ",".join(cm.class_names)
    rows = [header]
    for name, row in zip(cm.class_names, row_normalize(cm)):
        rows.append(name + "," + ",".join(f"{v:.2f}" for v in row))
    return "\n".join(rows) + "\n"


def _heat_color(frac: float) -> str:
    # white at 0 to a deep blue at 1
    frac = min(max(frac, 0.0), 1.0)
    r = int(round(255 - 205 * frac))
    g = int(round(255 - 175 * frac))
    b = int(round(255 - 80 * frac))
    return f"#{r:02x}{g:02x}{b:02x}"


def heatmap_svg(cm: ConfusionMatrix, title: str = "confusion matrix") -> str:
    """Row-normalized heatmap as a standalone SVG string."""
    pct = row_normalize(cm)
    c = cm.num_classes
    cell = 72
    left, top = 110, 70
    width = left + c * cell + 30
    height = top + c * cell + 60
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
        f'height="{height}" font-family="sans-serif" font-size="13">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{left + c * cell / 2}" y="30" text-anchor="middle" '
        f'font-size="16">{title}</text>',
    ]
    for i in range(c):
        for j in range(c):
            x, y = left + j * cell, top + i * cell
            color = _heat_color(pct[i, j] / 100.0)
            parts.append(
                f'<rect x="{x}" y="{y}" width="{cell}" height="{cell}" '
                f'fill="{color}" stroke="#888"/>')
            text_fill = "white" if pct[i, j] > 55 else "black"
            parts.append(
                f'<text x="{x + cell / 2}" y="{y + cell / 2 + 5}" '
                f'text-anchor="middle" fill="{text_fill}">{pct[i, j]:.2f}</text>')
    for i, name in enumerate(cm.class_names):
        parts.append(
            f'<text x="{left - 8}" y="{top + i * cell + cell / 2 + 5}" '
            f'text-anchor="end">{name}</text>')
        parts.append(
            f'<text x="{left + i * cell + cell / 2}" y="{top + c * cell + 22}" '
            f'text-anchor="middle">{name}</text>')
    parts.append(
        f'<text x="{left - 8}" y="{top - 14}" text-anchor="end" '
        f'font-style="italic">true \\ pred</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
