"""Classification metrics: rank-based AUROC, balanced accuracy, confusion statistics."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np


class MetricUndefinedError(ValueError):
    """A metric was requested on data where it is undefined (single-class input)."""


def _as_binary_labels(labels) -> np.ndarray:
    arr = np.asarray(labels)
    if not set(np.unique(arr)).issubset({0, 1}):
        raise ValueError(f"labels must be in {{0,1}}, got values {sorted(set(arr.tolist()))}")
    return arr.astype(int)


def _average_ranks(values: np.ndarray) -> np.ndarray:
    order = np.argsort(values, kind="mergesort")
    ranks = np.empty(len(values), dtype=float)
    sorted_vals = values[order]
    i = 0
    n = len(values)
    while i < n:
        j = i
        while j + 1 < n and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def auroc(scores: Sequence[float], labels: Sequence[int]) -> float:
    """Area under the ROC curve via the rank statistic.

    Equals the fraction of (positive, negative) pairs ranked correctly, with
    ties counted as one half. Raises when only one class is present.
    """
    scores_arr = np.asarray(scores, dtype=float)
    labels_arr = _as_binary_labels(labels)
    if scores_arr.shape != labels_arr.shape:
        raise ValueError(f"shape mismatch: {scores_arr.shape} scores vs {labels_arr.shape} labels")
    n_pos = int((labels_arr == 1).sum())
    n_neg = int((labels_arr == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise MetricUndefinedError("AUROC is undefined when only one class is present")
    ranks = _average_ranks(scores_arr)
    rank_sum = ranks[labels_arr == 1].sum()
    return float((rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def _confusion_counts(preds, labels, threshold: float) -> tuple[int, int, int, int]:
    labels_arr = _as_binary_labels(labels)
    preds_arr = (np.asarray(preds, dtype=float) >= threshold).astype(int)
    if preds_arr.shape != labels_arr.shape:
        raise ValueError(f"shape mismatch: {preds_arr.shape} preds vs {labels_arr.shape} labels")
    n_pos = int((labels_arr == 1).sum())
    n_neg = int((labels_arr == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise MetricUndefinedError("confusion metrics are undefined when only one class is present")
    tp = int(((preds_arr == 1) & (labels_arr == 1)).sum())
    fp = int(((preds_arr == 1) & (labels_arr == 0)).sum())
    tn = int(((preds_arr == 0) & (labels_arr == 0)).sum())
    fn = int(((preds_arr == 0) & (labels_arr == 1)).sum())
    return tp, fp, tn, fn


def balanced_accuracy(preds: Sequence[float], labels: Sequence[int], threshold: float = 0.5) -> float:
    """Mean of sensitivity and specificity at the given threshold."""
    tp, fp, tn, fn = _confusion_counts(preds, labels, threshold)
    sensitivity = tp / (tp + fn)
    specificity = tn / (tn + fp)
    return (sensitivity + specificity) / 2.0


@dataclass(frozen=True)
class ConfusionStats:
    sensitivity: float
    specificity: float
    f1: float
    f1_degenerate: bool
    tp: int
    fp: int
    tn: int
    fn: int


def f1_from_counts(tp: int, fp: int, fn: int) -> tuple[float, bool]:
    """F1 from confusion counts; a zero denominator yields (0, flagged) instead of raising."""
    denom = 2 * tp + fp + fn
    if denom == 0:
        return 0.0, True
    return 2 * tp / denom, False


def confusion_stats(preds: Sequence[float], labels: Sequence[int], threshold: float = 0.5) -> ConfusionStats:
    """Sensitivity, specificity, and F1 from the confusion matrix at a threshold."""
    tp, fp, tn, fn = _confusion_counts(preds, labels, threshold)
    sensitivity = tp / (tp + fn)
    specificity = tn / (tn + fp)
    f1, degenerate = f1_from_counts(tp, fp, fn)
    return ConfusionStats(
        sensitivity=sensitivity,
        specificity=specificity,
        f1=f1,
        f1_degenerate=degenerate,
        tp=tp,
        fp=fp,
        tn=tn,
        fn=fn,
    )


@dataclass
class PredictionSet:
    """Per-sample diagnostic and concept scores alongside ground truth."""

    sample_ids: list[str]
    y_true: np.ndarray
    y_score: np.ndarray
    c_true: np.ndarray
    c_score: np.ndarray

    def __post_init__(self) -> None:
        n = len(self.sample_ids)
        self.y_true = np.asarray(self.y_true, dtype=int)
        self.y_score = np.asarray(self.y_score, dtype=float)
        self.c_true = np.asarray(self.c_true, dtype=int)
        self.c_score = np.asarray(self.c_score, dtype=float)
        if not (len(self.y_true) == len(self.y_score) == self.c_true.shape[0] == self.c_score.shape[0] == n):
            raise ValueError("prediction set arrays do not share the sample dimension")
        if self.c_true.shape != self.c_score.shape:
            raise ValueError("concept truth and score matrices differ in shape")
        for name, arr in (("y_score", self.y_score), ("c_score", self.c_score)):
            if arr.size and (arr.min() < 0 or arr.max() > 1):
                raise ValueError(f"{name} entries must lie in [0, 1]")

    @property
    def n_concepts(self) -> int:
        return self.c_true.shape[1]


def per_concept_auroc(predset: PredictionSet) -> list[Optional[float]]:
    """Independent AUROC per concept; concepts with a single class are absent (None)."""
    out: list[Optional[float]] = []
    for i in range(predset.n_concepts):
        truth = predset.c_true[:, i]
        if truth.min() == truth.max():
            out.append(None)
        else:
            out.append(auroc(predset.c_score[:, i], truth))
    return out


def save_predictions(predset: PredictionSet, path: Path | str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["sample_id", "y_true", "y_score", "c_true", "c_score"])
        for i, sid in enumerate(predset.sample_ids):
            writer.writerow(
                [
                    sid,
                    int(predset.y_true[i]),
                    f"{predset.y_score[i]:.8f}",
                    "".join(str(int(b)) for b in predset.c_true[i]),
                    ";".join(f"{v:.8f}" for v in predset.c_score[i]),
                ]
            )
    return path


def load_predictions(path: Path | str) -> PredictionSet:
    sample_ids: list[str] = []
    y_true: list[int] = []
    y_score: list[float] = []
    c_true: list[list[int]] = []
    c_score: list[list[float]] = []
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[:5] != ["sample_id", "y_true", "y_score", "c_true", "c_score"]:
            raise ValueError(f"{path}: unexpected predictions header {header}")
        for row in reader:
            sample_ids.append(row[0])
            y_true.append(int(row[1]))
            y_score.append(float(row[2]))
            c_true.append([int(ch) for ch in row[3]])
            c_score.append([float(v) for v in row[4].split(";")] if row[4] else [])
    return PredictionSet(
        sample_ids=sample_ids,
        y_true=np.array(y_true),
        y_score=np.array(y_score),
        c_true=np.array(c_true),
        c_score=np.array(c_score),
    )
