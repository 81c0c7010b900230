"""Ordinal evaluation metrics."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from cdwce.numeric import InvalidInputError


@dataclass(frozen=True)
class MetricSummary:
    qwk: float
    accuracy: float
    mae: float

    def to_dict(self) -> dict:
        return asdict(self)


def confusion_matrix(preds, labels, n_classes: int) -> np.ndarray:
    """Counts with rows = true class, columns = predicted class."""
    p = np.asarray(preds, dtype=np.int64).ravel()
    t = np.asarray(labels, dtype=np.int64).ravel()
    if p.shape != t.shape:
        raise InvalidInputError(f"length mismatch: {p.size} predictions vs {t.size} labels")
    if p.size == 0:
        raise InvalidInputError("no samples to evaluate")
    if n_classes < 1:
        raise InvalidInputError("n_classes must be positive")
    for name, arr in (("prediction", p), ("label", t)):
        bad = (arr < 0) | (arr >= n_classes)
        if bad.any():
            raise InvalidInputError(f"{name} {arr[bad][0]} out of range for {n_classes} classes")
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (t, p), 1)
    return cm


def qwk(cm, normalize_weights: bool = False) -> float:
    """Quadratic weighted Cohen's kappa from a confusion matrix.

    Weights are ``(i - j)**2``; dividing them by ``(N - 1)**2`` (set
    ``normalize_weights``) cancels in the ratio and gives the same kappa.
    Perfect agreement confined to one class (both weighted sums zero) is
    reported as 1.0.
    """
    O = np.asarray(cm, dtype=np.float64)
    if O.ndim != 2 or O.shape[0] != O.shape[1] or O.shape[0] < 2:
        raise InvalidInputError(f"need a square matrix with >= 2 classes, got shape {O.shape}")
    total = O.sum()
    if total <= 0:
        raise InvalidInputError("confusion matrix is empty")
    n = O.shape[0]
    idx = np.arange(n)
    w = (idx[:, None] - idx[None, :]).astype(np.float64) ** 2
    if normalize_weights:
        w = w / (n - 1) ** 2
    E = np.outer(O.sum(axis=1), O.sum(axis=0)) / total
    observed = (w * O).sum()
    expected = (w * E).sum()
    if expected == 0.0:
        return 1.0 if observed == 0.0 else 0.0
    return float(1.0 - observed / expected)


def summary_metrics(preds, labels, n_classes: int) -> MetricSummary:
    cm = confusion_matrix(preds, labels, n_classes)
    p = np.asarray(preds, dtype=np.int64).ravel()
    t = np.asarray(labels, dtype=np.int64).ravel()
    return MetricSummary(
        qwk=qwk(cm),
        accuracy=float(np.trace(cm) / cm.sum()),
        mae=float(np.abs(p - t).mean()),
    )
