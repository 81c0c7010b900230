"""Cross-entropy, class distance weighted cross-entropy (CDW-CE) and CORN.

All losses take raw logits and fuse the softmax/sigmoid internally. A 1-D
logit vector with an integer target is a single sample; a ``(batch, n)``
matrix with an integer array of targets is reduced by the batch mean, and the
returned gradient is the gradient of that mean.

CE and CDW-CE read the same N-logit head. CORN reads an (N-1)-logit head, one
binary task per rank threshold.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from cdwce.numeric import DEFAULT_LOG_EPS, InvalidInputError, sigmoid, softmax, softplus

LOSS_KINDS = ("ce", "cdw_ce", "corn")


@dataclass(frozen=True)
class LossResult:
    value: float
    grad_logits: np.ndarray


def _check_batch(logits, targets, n_classes: int | None = None):
    z = np.asarray(logits, dtype=np.float64)
    single = z.ndim == 1
    if single:
        z = z[None, :]
        t = np.asarray([targets])
    else:
        t = np.asarray(targets)
    if z.ndim != 2 or z.shape[0] == 0:
        raise InvalidInputError(f"logits must be 1-D or a non-empty 2-D batch, got shape {z.shape}")
    if not np.all(np.isfinite(z)):
        raise InvalidInputError("logits contain non-finite values")
    if t.shape != (z.shape[0],):
        raise InvalidInputError(f"expected {z.shape[0]} targets, got shape {t.shape}")
    if t.dtype.kind not in "iu":
        if not np.all(np.mod(t, 1) == 0):
            raise InvalidInputError("targets must be integers")
        t = t.astype(np.int64)
    n = z.shape[1] if n_classes is None else n_classes
    if np.any(t < 0) or np.any(t >= n):
        raise InvalidInputError(f"target out of range for {n} classes: {t.tolist()}")
    return z, t.astype(np.int64), single


def _finish(values: np.ndarray, grads: np.ndarray, single: bool) -> LossResult:
    # grads are per-sample; the reported gradient belongs to the batch mean
    b = values.shape[0]
    grad = grads / b
    return LossResult(float(values.mean()), grad[0] if single else grad)


def ce_loss(logits, target) -> LossResult:
    """Categorical cross-entropy, ``-ln softmax(z)[c]``."""
    z, t, single = _check_batch(logits, target)
    if z.shape[1] < 2:
        raise InvalidInputError("need at least 2 classes")
    shifted = z - z.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1))
    rows = np.arange(z.shape[0])
    values = log_norm - shifted[rows, t]
    grads = softmax(z)
    grads[rows, t] -= 1.0
    return _finish(values, grads, single)


def distance_weights(n_classes: int, target, power: float) -> np.ndarray:
    """``|i - c| ** power`` for every class ``i``; shape ``(len(target), n)``."""
    t = np.atleast_1d(np.asarray(target))
    dist = np.abs(np.arange(n_classes)[None, :] - t[:, None]).astype(np.float64)
    return dist**power


def cdw_ce_loss(logits, target, power: float, eps: float = DEFAULT_LOG_EPS) -> LossResult:
    """Class distance weighted cross-entropy.

    ``-sum_i ln(max(1 - p_i, eps)) * |i - c| ** power`` with ``p = softmax(z)``.
    The true class carries weight zero, so only non-true classes contribute.

    With ``w_i`` the weights and ``r_i = p_i / (1 - p_i)``, the logit gradient
    is ``w_j r_j - p_j * sum_i w_i r_i``. Clamped terms are constant and drop
    out of the gradient.
    """
    if not power > 0:
        raise InvalidInputError(f"power must be positive, got {power}")
    z, t, single = _check_batch(logits, target)
    n = z.shape[1]
    if n < 2:
        raise InvalidInputError("need at least 2 classes")
    e = np.exp(z - z.max(axis=1, keepdims=True))
    total = e.sum(axis=1, keepdims=True)
    # 1 - p_i as (sum of the other exps) / total, avoiding cancellation near p_i = 1
    others = e @ (1.0 - np.eye(n))
    one_minus = others / total
    p = e / total
    w = distance_weights(n, t, power)
    active = one_minus > eps
    log_terms = np.log(np.where(active, one_minus, eps))
    values = -(w * log_terms).sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(active, e / np.where(active, others, 1.0), 0.0)
    a = w * ratio
    grads = a - p * a.sum(axis=1, keepdims=True)
    return _finish(values, grads, single)


def ce_from_probs(probs, target: int) -> float:
    """Cross-entropy value for an explicit probability vector (no gradient)."""
    p = _check_probs(probs, target)
    if p[target] <= 0.0:
        return float("inf")
    return float(-np.log(p[target]))


def cdw_ce_from_probs(probs, target: int, power: float, eps: float = DEFAULT_LOG_EPS) -> float:
    """CDW-CE value for an explicit probability vector (no gradient)."""
    if not power > 0:
        raise InvalidInputError(f"power must be positive, got {power}")
    p = _check_probs(probs, target)
    w = distance_weights(p.shape[0], target, power)[0]
    return float(-(w * np.log(np.maximum(1.0 - p, eps))).sum())


def _check_probs(probs, target: int) -> np.ndarray:
    p = np.asarray(probs, dtype=np.float64)
    if p.ndim != 1 or p.shape[0] < 2:
        raise InvalidInputError("probs must be a vector of length >= 2")
    if np.any(p < 0) or np.any(p > 1) or abs(p.sum() - 1.0) > 1e-9:
        raise InvalidInputError("probs must lie in [0, 1] and sum to 1")
    if not 0 <= int(target) < p.shape[0]:
        raise InvalidInputError(f"target {target} out of range")
    return p


def corn_loss(task_logits, targets) -> LossResult:
    """CORN conditional binary cross-entropy.

    Task ``k`` sees only samples with label >= k and predicts ``label > k``.
    The value is the mean over all conditional terms of the batch; task 0
    always sees the whole batch so the denominator is never zero.
    """
    x = np.asarray(task_logits, dtype=np.float64)
    if x.ndim == 0 or x.shape[-1] < 1:
        raise InvalidInputError("CORN needs at least one task logit (N >= 2)")
    n_classes = x.shape[-1] + 1
    x, t, single = _check_batch(x, targets, n_classes=n_classes)
    k = np.arange(x.shape[1])[None, :]
    mask = (t[:, None] >= k).astype(np.float64)
    y = (t[:, None] > k).astype(np.float64)
    count = mask.sum()
    value = float((mask * (softplus(x) - y * x)).sum() / count)
    grad = mask * (sigmoid(x) - y) / count
    return LossResult(value, grad[0] if single else grad)


def corn_cumulative_probs(task_logits) -> np.ndarray:
    """``q_k = prod_{j<=k} sigmoid(x_j)``, an estimate of P(label > k)."""
    x = np.asarray(task_logits, dtype=np.float64)
    if x.ndim == 0 or x.shape[-1] < 1:
        raise InvalidInputError("CORN needs at least one task logit")
    return np.cumprod(sigmoid(x), axis=-1)


def corn_predict(task_logits):
    """Predicted rank: number of thresholds with cumulative probability > 0.5."""
    q = corn_cumulative_probs(task_logits)
    pred = (q > 0.5).sum(axis=-1)
    return int(pred) if np.ndim(pred) == 0 else pred.astype(np.int64)


def batch_reduce(per_sample: Sequence[LossResult]) -> LossResult:
    if len(per_sample) == 0:
        raise InvalidInputError("cannot reduce an empty batch")
    values = np.array([r.value for r in per_sample])
    grads = np.stack([np.asarray(r.grad_logits) for r in per_sample])
    return LossResult(float(values.mean()), grads.mean(axis=0))


def head_size(loss_kind: str, n_classes: int) -> int:
    """Output-layer width a loss expects: N for CE/CDW-CE, N-1 for CORN."""
    if loss_kind not in LOSS_KINDS:
        raise InvalidInputError(f"unknown loss {loss_kind!r}; expected one of {LOSS_KINDS}")
    return n_classes - 1 if loss_kind == "corn" else n_classes


def compute_loss(loss_kind: str, logits, targets, power: float | None = None) -> LossResult:
    if loss_kind == "ce":
        return ce_loss(logits, targets)
    if loss_kind == "cdw_ce":
        if power is None:
            raise InvalidInputError("cdw_ce requires a power")
        return cdw_ce_loss(logits, targets, power)
    if loss_kind == "corn":
        return corn_loss(logits, targets)
    raise InvalidInputError(f"unknown loss {loss_kind!r}; expected one of {LOSS_KINDS}")
