"""Segmentation metrics: aggregated confusion matrix and mean IoU.

One confusion matrix is accumulated over a whole split (global aggregation,
not per-image averaging). IoU_c = TP_c / (TP_c + FP_c + FN_c); classes that
never occur in either ground truth or prediction are excluded from the mean
rather than scored 0 or 1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import N_CLASSES
from .errors import LabelOutOfRange


class ConfusionMatrix:
    """Rows are ground truth, columns are prediction."""

    def __init__(self, n_classes: int = N_CLASSES):
        self.n_classes = n_classes
        self.counts = np.zeros((n_classes, n_classes), dtype=np.int64)

    def update(self, prediction: np.ndarray, label: np.ndarray) -> None:
        pred = np.asarray(prediction).reshape(-1).astype(np.int64)
        lab = np.asarray(label).reshape(-1).astype(np.int64)
        if pred.shape != lab.shape:
            raise ValueError(f"prediction {pred.shape} vs label {lab.shape}")
        if lab.min() < 0 or lab.max() >= self.n_classes:
            raise LabelOutOfRange(
                f"labels outside 0..{self.n_classes - 1}: [{lab.min()}, {lab.max()}]")
        if pred.min() < 0 or pred.max() >= self.n_classes:
            raise LabelOutOfRange(
                f"predictions outside 0..{self.n_classes - 1}: [{pred.min()}, {pred.max()}]")
        flat = lab * self.n_classes + pred
        self.counts += np.bincount(flat, minlength=self.n_classes ** 2).reshape(
            self.n_classes, self.n_classes)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def per_class_iou(self) -> np.ndarray:
        """IoU per class; NaN where TP+FP+FN == 0 (class absent everywhere)."""
        tp = np.diag(self.counts).astype(np.float64)
        fp = self.counts.sum(axis=0) - tp
        fn = self.counts.sum(axis=1) - tp
        union = tp + fp + fn
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(union > 0, tp / union, np.nan)

    def mean_iou(self) -> float:
        """Mean over defined classes only."""
        iou = self.per_class_iou()
        return float(np.nanmean(iou))


@dataclass
class EvalReport:
    split: str
    per_class_iou: list[float]  # NaN marks classes excluded from the mean
    mean_iou: float
    pixel_count: int

    def format_table(self, class_names: list[str] | None = None) -> str:
        names = class_names or default_class_names(len(self.per_class_iou))
        lines = [f"split: {self.split}  ({self.pixel_count} pixels)",
                 f"{'class':<18s} {'IoU':>8s}"]
        for name, iou in zip(names, self.per_class_iou):
            shown = "   --  " if np.isnan(iou) else f"{iou:7.4f}"
            lines.append(f"{name:<18s} {shown:>8s}")
        lines.append(f"{'mean IoU':<18s} {self.mean_iou:8.4f}")
        lines.append("classes with no ground-truth or predicted pixels are "
                      "excluded from the mean")
        return "\n".join(lines)


def default_class_names(n: int = N_CLASSES) -> list[str]:
    names = ["background", "walls_borders", "static_square", "circle"]
    names += [f"dynamic_digit_{d}" for d in range(n - 4)]
    return names[:n]
