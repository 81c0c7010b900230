"""Numeric primitives shared by the losses and the network.

Everything works on float64 numpy arrays. Row-major batches are supported
where it is cheap to do so: ``softmax`` and the layer functions accept a
single vector or a ``(batch, features)`` matrix.
"""

from __future__ import annotations

import numpy as np

DEFAULT_LOG_EPS = 1e-7


class InvalidInputError(ValueError):
    """Raised when an argument violates a documented precondition."""


def make_rng(seed: int) -> np.random.Generator:
    """Return a PCG64 generator; identical seeds give identical streams."""
    if seed < 0:
        raise InvalidInputError(f"seed must be non-negative, got {seed}")
    return np.random.Generator(np.random.PCG64(int(seed)))


def child_seed(*parts: int) -> int:
    """Derive an independent 63-bit seed from a tuple of integers.

    Used so parallel jobs never share generator state; the result depends only
    on ``parts``, not on scheduling order.
    """
    ss = np.random.SeedSequence([int(p) for p in parts])
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


def _as_finite(x, name: str) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} contains non-finite values")
    return arr


def softmax(logits) -> np.ndarray:
    """Max-shifted softmax over the last axis."""
    z = _as_finite(logits, "logits")
    if z.ndim == 0 or z.shape[-1] < 2:
        raise InvalidInputError("softmax needs at least 2 logits")
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(logits) -> np.ndarray:
    z = _as_finite(logits, "logits")
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def clamped_log1m(p, eps: float = DEFAULT_LOG_EPS):
    """ln(max(1 - p, eps)), elementwise."""
    if not 0.0 < eps < 1.0:
        raise InvalidInputError(f"eps must lie in (0, 1), got {eps}")
    arr = np.asarray(p, dtype=np.float64)
    if np.any(np.isnan(arr)) or np.any(arr < 0.0) or np.any(arr > 1.0):
        raise InvalidInputError("probabilities must lie in [0, 1]")
    out = np.log(np.maximum(1.0 - arr, eps))
    return float(out) if out.ndim == 0 else out


def sigmoid(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softplus(x) -> np.ndarray:
    """ln(1 + e^x) without overflow."""
    x = np.asarray(x, dtype=np.float64)
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def affine(x, W, b) -> np.ndarray:
    """``W @ x + b`` for a vector, or ``x @ W.T + b`` for a batch of rows.

    ``W`` has shape ``(out, in)``.
    """
    x = _as_finite(x, "x")
    W = np.asarray(W, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if W.ndim != 2 or b.shape != (W.shape[0],) or x.shape[-1] != W.shape[1] or x.ndim > 2:
        raise InvalidInputError(
            f"shape mismatch: x{x.shape}, W{W.shape}, b{b.shape}"
        )
    return x @ W.T + b


def affine_backward(dout, x, W):
    """Return ``(dx, dW, db)`` for ``affine``; batch gradients are summed over rows."""
    dout = np.asarray(dout, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    W = np.asarray(W, dtype=np.float64)
    if dout.shape[-1] != W.shape[0] or x.shape[-1] != W.shape[1] or dout.shape[:-1] != x.shape[:-1]:
        raise InvalidInputError(
            f"shape mismatch: dout{dout.shape}, x{x.shape}, W{W.shape}"
        )
    dx = dout @ W
    if x.ndim == 1:
        return dx, np.outer(dout, x), dout.copy()
    return dx, dout.T @ x, dout.sum(axis=0)


def relu(x) -> np.ndarray:
    x = _as_finite(x, "x")
    return np.maximum(x, 0.0)


def relu_backward(dout, x) -> np.ndarray:
    # subgradient at exactly 0 is 0
    dout = np.asarray(dout, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if dout.shape != x.shape:
        raise InvalidInputError(f"shape mismatch: dout{dout.shape}, x{x.shape}")
    return np.where(x > 0.0, dout, 0.0)
