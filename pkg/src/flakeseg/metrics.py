"""One-vs-rest confusion counts and the segmentation metric suite."""
from __future__ import annotations

from dataclasses import dataclass, asdict, field

import numpy as np

from .imagecore import N_CLASSES, CLASS_NAMES


@dataclass
class ConfusionCounts:
    """Per-class TP/FP/TN/FN plus the full ``(truth, pred)`` matrix."""

    matrix: np.ndarray = field(default_factory=lambda: np.zeros((N_CLASSES, N_CLASSES), dtype=np.int64))

    @property
    def tp(self):
        return np.diag(self.matrix).copy()

    @property
    def fp(self):
        return self.matrix.sum(axis=0) - self.tp

    @property
    def fn(self):
        return self.matrix.sum(axis=1) - self.tp

    @property
    def total(self):
        return int(self.matrix.sum())

    @property
    def tn(self):
        return self.total - self.tp - self.fp - self.fn

    def present_classes(self):
        """Classes occurring in the truth or the prediction."""
        return np.flatnonzero((self.matrix.sum(axis=0) + self.matrix.sum(axis=1)) > 0)

    def __add__(self, other):
        return ConfusionCounts(self.matrix + other.matrix)


def confusion(pred, truth, n_classes=N_CLASSES):
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    if pred.shape != truth.shape:
        raise ValueError(f"prediction dims {pred.shape} do not match truth dims {truth.shape}")
    idx = truth.astype(np.int64).ravel() * n_classes + pred.astype(np.int64).ravel()
    m = np.bincount(idx, minlength=n_classes * n_classes).reshape(n_classes, n_classes)
    return ConfusionCounts(m)


@dataclass
class MetricReport:
    pixel_accuracy: float | None
    mean_accuracy: float | None
    miou: float | None
    precision: float | None
    recall: float | None
    f1: float | None
    per_class_iou: list
    per_class_accuracy: list
    present_classes: list
    printed_pixel_accuracy: float | None = None
    printed_f1: float | None = None
    undefined: bool = False

    def to_dict(self):
        return asdict(self)

    def table(self):
        rows = [f"{'class':<12}{'IoU':>8}{'acc':>8}"]
        for k in range(len(self.per_class_iou)):
            iou, acc = self.per_class_iou[k], self.per_class_accuracy[k]
            fmt = lambda v: f"{v:8.4f}" if v is not None else f"{'-':>8}"
            rows.append(f"{CLASS_NAMES[k]:<12}{fmt(iou)}{fmt(acc)}")
        return "\n".join(rows)


def _ratio(num, den):
    return np.where(den > 0, num / np.where(den > 0, den, 1), np.nan)


def _mean_over(values, classes):
    v = values[classes]
    v = v[~np.isnan(v)]
    return float(v.mean()) if len(v) else None


def evaluate(counts: ConfusionCounts, present_classes=None):
    """Six metrics, each class-averaged over ``present_classes``.

    Class terms with an empty denominator are skipped.  Pixel accuracy is the
    share of correctly labelled pixels; F1 is the harmonic mean of the
    averaged precision and recall.  The as-printed one-vs-rest pixel accuracy
    and ``2P/(P+R)`` are kept alongside for reference.
    """
    tp, fp, fn, tn = (x.astype(np.float64) for x in (counts.tp, counts.fp, counts.fn, counts.tn))
    present = counts.present_classes() if present_classes is None else np.asarray(present_classes, dtype=int)
    k_all = len(tp)
    if len(present) == 0 or counts.total == 0:
        return MetricReport(None, None, None, None, None, None, [None] * k_all, [None] * k_all, [],
                            undefined=True)
    total = tp + fp + fn + tn
    acc_k = _ratio(tp + tn, total)
    iou_k = _ratio(tp, tp + fp + fn)
    prec_k = _ratio(tp, tp + fp)
    rec_k = _ratio(tp, tp + fn)
    precision = _mean_over(prec_k, present)
    recall = _mean_over(rec_k, present)
    if precision is None or recall is None or precision + recall == 0:
        f1 = printed_f1 = None if precision is None or recall is None else 0.0
    else:
        f1 = 2 * precision * recall / (precision + recall)
        printed_f1 = 2 * precision / (precision + recall)
    mask = np.zeros(k_all, dtype=bool)
    mask[present] = True

    def listed(v):
        return [float(x) if mask[i] and not np.isnan(x) else None for i, x in enumerate(v)]

    return MetricReport(
        pixel_accuracy=float(tp.sum() / counts.total),
        mean_accuracy=_mean_over(acc_k, present),
        miou=_mean_over(iou_k, present),
        precision=precision,
        recall=recall,
        f1=f1,
        per_class_iou=listed(iou_k),
        per_class_accuracy=listed(acc_k),
        present_classes=[int(c) for c in present],
        printed_pixel_accuracy=float((tp + tn)[present].sum() / total[present].sum()),
        printed_f1=printed_f1,
    )


def evaluate_masks(preds, truths):
    counts = ConfusionCounts()
    for p, t in zip(preds, truths):
        counts = counts + confusion(p, t)
    return evaluate(counts)
