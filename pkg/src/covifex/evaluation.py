"""Stratified k-fold cross-validation, confusion-matrix metrics, and
wall-clock timing capture.

Metric conventions: recall = TP/(TP+FN), precision = TP/(TP+FP),
accuracy = (TP+TN)/total, F1 = 2*recall*precision/(recall+precision),
all for the positive (COVID-19) class. Fold aggregation reports the
arithmetic mean and the population standard deviation.
"""
from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable, NamedTuple, TypeVar

import numpy as np

from .data import FeatureMatrix
from .ensemble import ClassifierKind, EnsembleConfig, predict, train
from .errors import ValidationError

T = TypeVar("T")


@dataclass(frozen=True)
class FoldPlan:
    k: int
    folds: tuple[tuple[int, ...], ...]
    seed: int
    stratified: bool = True

    @property
    def n(self) -> int:
        return sum(len(f) for f in self.folds)

    def train_indices(self, fold: int) -> np.ndarray:
        rest = [i for f in range(self.k) if f != fold for i in self.folds[f]]
        return np.array(sorted(rest), dtype=np.int64)

    def test_indices(self, fold: int) -> np.ndarray:
        return np.array(self.folds[fold], dtype=np.int64)


def stratified_kfold(labels: np.ndarray, k: int, seed: int) -> FoldPlan:
    """Deterministic stratified partition into k folds.

    Per class, indices are shuffled by a seeded generator and dealt
    round-robin; the dealing start rotates between classes so overall fold
    sizes stay balanced. Per-class per-fold counts differ by at most one.
    """
    labels = np.asarray(labels, dtype=np.int64)
    if k < 2:
        raise ValidationError(f"k must be >= 2, got {k}")
    rng = np.random.default_rng(seed)
    folds: list[list[int]] = [[] for _ in range(k)]
    offset = 0
    for cls in sorted(np.unique(labels)):
        idx = np.flatnonzero(labels == cls)
        if len(idx) < k:
            raise ValidationError(
                f"class {cls} has {len(idx)} members, fewer than k={k} folds"
            )
        rng.shuffle(idx)
        for j, i in enumerate(idx):
            folds[(offset + j) % k].append(int(i))
        offset = (offset + len(idx)) % k
    return FoldPlan(k=k, folds=tuple(tuple(sorted(f)) for f in folds), seed=seed)


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


def confusion(y_true: np.ndarray, y_pred: np.ndarray) -> ConfusionCounts:
    """Count TP/FP/TN/FN with 1 as the positive class."""
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    if y_true.shape != y_pred.shape:
        raise ValidationError(
            f"length mismatch: {y_true.shape[0]} true vs {y_pred.shape[0]} predicted"
        )
    for name, arr in (("y_true", y_true), ("y_pred", y_pred)):
        if arr.size and not np.isin(arr, (0, 1)).all():
            raise ValidationError(f"{name} must be binary {{0, 1}}")
    return ConfusionCounts(
        tp=int(((y_true == 1) & (y_pred == 1)).sum()),
        fp=int(((y_true == 0) & (y_pred == 1)).sum()),
        tn=int(((y_true == 0) & (y_pred == 0)).sum()),
        fn=int(((y_true == 1) & (y_pred == 0)).sum()),
    )


class Metrics(NamedTuple):
    accuracy: float
    precision: float
    recall: float
    f1: float
    degenerate: bool = False


def metrics(c: ConfusionCounts) -> Metrics:
    """Accuracy/precision/recall/F1 from confusion counts.

    A zero denominator (no predicted positives, no actual positives, or a
    zero precision+recall sum) yields 0 for the affected metric and sets
    the degenerate flag rather than failing the run.
    """
    if c.total == 0:
        raise ValidationError("metrics undefined for zero evaluated samples")
    degenerate = False
    accuracy = (c.tp + c.tn) / c.total
    if c.tp + c.fp > 0:
        precision = c.tp / (c.tp + c.fp)
    else:
        precision, degenerate = 0.0, True
    if c.tp + c.fn > 0:
        recall = c.tp / (c.tp + c.fn)
    else:
        recall, degenerate = 0.0, True
    if precision + recall > 0:
        f1 = 2.0 * recall * precision / (recall + precision)
    else:
        f1, degenerate = 0.0, True
    return Metrics(accuracy, precision, recall, f1, degenerate)


def macro_metrics(c: ConfusionCounts) -> tuple[float, float, float]:
    """Macro-averaged (precision, recall, f1) over both classes; the
    negative class is scored by swapping the confusion roles."""
    pos = metrics(c)
    neg = metrics(ConfusionCounts(tp=c.tn, fp=c.fn, tn=c.tp, fn=c.fp))
    return (
        (pos.precision + neg.precision) / 2.0,
        (pos.recall + neg.recall) / 2.0,
        (pos.f1 + neg.f1) / 2.0,
    )


@dataclass(frozen=True)
class FoldMetrics:
    accuracy: float
    precision: float
    recall: float
    f1: float
    train_time_s: float
    predict_time_s: float
    confusion: ConfusionCounts
    degenerate: bool = False


_METRIC_FIELDS = ("accuracy", "precision", "recall", "f1", "train_time_s", "predict_time_s")


@dataclass(frozen=True)
class MetricSummary:
    per_fold: tuple[FoldMetrics, ...]
    mean: dict[str, float]
    std: dict[str, float]

    @staticmethod
    def from_folds(per_fold: list[FoldMetrics]) -> "MetricSummary":
        mean = {}
        std = {}
        for name in _METRIC_FIELDS:
            vals = np.array([getattr(f, name) for f in per_fold], dtype=np.float64)
            mean[name] = float(vals.mean())
            std[name] = float(vals.std())  # population standard deviation
        return MetricSummary(per_fold=tuple(per_fold), mean=mean, std=std)


def time_block(label: str, thunk: Callable[[], T]) -> tuple[T, float]:
    """Run ``thunk`` and return (result, elapsed seconds) on the monotonic clock."""
    t0 = time.perf_counter()
    result = thunk()
    return result, time.perf_counter() - t0


def cross_validate(
    kind: ClassifierKind,
    X: FeatureMatrix,
    cfg: EnsembleConfig,
    plan: FoldPlan,
) -> MetricSummary:
    """Train/evaluate on every fold of ``plan`` and aggregate the metrics."""
    if plan.n != X.n:
        raise ValidationError(f"fold plan covers {plan.n} samples, matrix has {X.n}")
    records: list[FoldMetrics] = []
    for f in range(plan.k):
        train_idx = plan.train_indices(f)
        test_idx = plan.test_indices(f)
        X_train = X.select(train_idx)
        X_test = X.select(test_idx)
        model, train_t = time_block("train", lambda: train(kind, X_train, cfg))
        preds, pred_t = time_block("predict", lambda: predict(model, X_test.values))
        counts = confusion(X_test.labels, preds)
        m = metrics(counts)
        records.append(
            FoldMetrics(
                accuracy=m.accuracy,
                precision=m.precision,
                recall=m.recall,
                f1=m.f1,
                train_time_s=train_t,
                predict_time_s=pred_t,
                confusion=counts,
                degenerate=m.degenerate,
            )
        )
    return MetricSummary.from_folds(records)
