"""Numpy MLP classifier trained with Adam.

Hidden layers use ReLU, the output layer is linear. The output width depends
only on the loss: N logits for CE and CDW-CE (a softmax head), N-1 task
logits for CORN.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from cdwce.data import Dataset
from cdwce.losses import LOSS_KINDS, LossResult, compute_loss, corn_predict, head_size
from cdwce.numeric import InvalidInputError, affine, make_rng, relu

CHECKPOINT_FORMAT = "cdwce-mlp"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class MlpModel:
    layer_sizes: tuple
    weights: tuple
    biases: tuple
    head: str = "softmax"  # "softmax" or "corn"

    @property
    def n_classes(self) -> int:
        out = self.layer_sizes[-1]
        return out + 1 if self.head == "corn" else out

    def parameters(self) -> list[np.ndarray]:
        return [p for pair in zip(self.weights, self.biases) for p in pair]

    def with_parameters(self, params) -> "MlpModel":
        params = list(params)
        return replace(self, weights=tuple(params[0::2]), biases=tuple(params[1::2]))

    def logits(self, X) -> np.ndarray:
        h = np.asarray(X, dtype=np.float64)
        if h.shape[-1] != self.layer_sizes[0]:
            raise InvalidInputError(f"expected {self.layer_sizes[0]} features, got {h.shape[-1]}")
        last = len(self.weights) - 1
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            h = affine(h, W, b)
            if i < last:
                h = relu(h)
        return h


@dataclass
class AdamState:
    m: list
    v: list
    step: int = 0
    lr: float = 2e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_model(cls, model: MlpModel, lr: float = 2e-4, **kw) -> "AdamState":
        params = model.parameters()
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params], lr=lr, **kw)


@dataclass(frozen=True)
class TrainConfig:
    loss_kind: str = "ce"
    power: float | None = None
    epochs: int = 100
    batch_size: int = 32
    lr: float = 2e-4
    seed: int = 0
    hidden: tuple = field(default=(32, 32))

    def validate(self) -> None:
        if self.loss_kind not in LOSS_KINDS:
            raise InvalidInputError(f"unknown loss {self.loss_kind!r}")
        if self.loss_kind == "cdw_ce" and (self.power is None or not self.power > 0):
            raise InvalidInputError("cdw_ce needs a positive power")
        if self.epochs < 1 or self.batch_size < 1 or not self.lr > 0:
            raise InvalidInputError("epochs, batch_size and lr must be positive")


def head_kind_for(loss_kind: str) -> str:
    return "corn" if loss_kind == "corn" else "softmax"


def mlp_init(layer_sizes, seed: int, head: str = "softmax") -> MlpModel:
    """He-scaled Gaussian weights (std sqrt(2 / fan_in)), zero biases."""
    sizes = tuple(int(s) for s in layer_sizes)
    if len(sizes) < 2 or any(s < 1 for s in sizes):
        raise InvalidInputError(f"invalid layer sizes {layer_sizes}")
    if head not in ("softmax", "corn"):
        raise InvalidInputError(f"unknown head {head!r}")
    if head == "softmax" and sizes[-1] < 2:
        raise InvalidInputError("softmax head needs >= 2 outputs")
    rng = make_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        weights.append(rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return MlpModel(sizes, tuple(weights), tuple(biases), head)


def build_model(n_features: int, n_classes: int, config: TrainConfig, seed: int | None = None) -> MlpModel:
    sizes = (n_features, *config.hidden, head_size(config.loss_kind, n_classes))
    return mlp_init(sizes, config.seed if seed is None else seed, head_kind_for(config.loss_kind))


def forward_backward(model: MlpModel, batch_x, batch_labels, loss_kind: str, power: float | None = None):
    """Mean batch loss and the gradient of every parameter.

    Returns ``(LossResult, grads)`` with ``grads`` ordered like
    ``model.parameters()``. The model is not modified.
    """
    x = np.asarray(batch_x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] == 0:
        raise InvalidInputError("batch_x must be a non-empty 2-D array")
    if x.shape[1] != model.layer_sizes[0]:
        raise InvalidInputError(f"expected {model.layer_sizes[0]} features, got {x.shape[1]}")
    if not np.all(np.isfinite(x)):
        raise InvalidInputError("batch_x contains non-finite values")
    if head_kind_for(loss_kind) != model.head:
        raise InvalidInputError(f"loss {loss_kind!r} does not match the model's {model.head} head")
    return _forward_backward(model.weights, model.biases, x, np.asarray(batch_labels), loss_kind, power)


def _forward_backward(weights, biases, x, labels, loss_kind, power):
    # inputs already validated; same maths as affine/relu and their backward passes
    inputs, masks = [], []
    h = x
    last = len(weights) - 1
    for i, (W, b) in enumerate(zip(weights, biases)):
        inputs.append(h)
        h = h @ W.T + b
        if i < last:
            mask = h > 0.0
            masks.append(mask)
            h = h * mask
    result = compute_loss(loss_kind, h, labels, power)
    grads: list = [None] * (2 * len(weights))
    dout = result.grad_logits
    for i in range(last, -1, -1):
        if i < last:
            dout = dout * masks[i]
        grads[2 * i] = dout.T @ inputs[i]
        grads[2 * i + 1] = dout.sum(axis=0)
        if i > 0:
            dout = dout @ weights[i]
    return result, grads


def _adam_update(theta, g, m, v, t, state: AdamState) -> None:
    """In-place bias-corrected Adam update of flat arrays at step ``t``."""
    b1, b2 = state.beta1, state.beta2
    m *= b1
    m += (1 - b1) * g
    v *= b2
    v += (1 - b2) * g * g
    step = (state.lr / (1 - b1**t)) * m / (np.sqrt(v / (1 - b2**t)) + state.eps)
    theta -= step


def adam_step(model: MlpModel, grads, state: AdamState):
    """One bias-corrected Adam update; returns ``(new_model, new_state)``."""
    params = model.parameters()
    if len(grads) != len(params) or any(np.shape(g) != p.shape for g, p in zip(grads, params)):
        raise InvalidInputError("gradient shapes do not match the model parameters")
    if len(state.m) != len(params) or any(mi.shape != p.shape for mi, p in zip(state.m, params)):
        raise InvalidInputError("optimizer state does not match the model parameters")
    theta = _flatten(params)
    m, v = _flatten(state.m), _flatten(state.v)
    t = state.step + 1
    _adam_update(theta, _flatten(grads), m, v, t, state)
    new_state = replace(state, m=_unflatten(m, params), v=_unflatten(v, params), step=t)
    return model.with_parameters(_unflatten(theta, params)), new_state


def _flatten(arrays) -> np.ndarray:
    return np.concatenate([np.asarray(a, dtype=np.float64).ravel() for a in arrays])


def _unflatten(flat: np.ndarray, like) -> list[np.ndarray]:
    out, pos = [], 0
    for p in like:
        out.append(flat[pos:pos + p.size].reshape(p.shape))
        pos += p.size
    return out


def fit(model: MlpModel, dataset: Dataset, config: TrainConfig):
    """Minibatch Adam training; returns ``(model, per-epoch mean loss trace)``.

    Batches are reshuffled every epoch from a generator seeded with
    ``config.seed``. The input model is left untouched.
    """
    config.validate()
    if len(dataset) == 0:
        raise InvalidInputError("cannot train on an empty dataset")
    if dataset.n_features != model.layer_sizes[0]:
        raise InvalidInputError(f"model expects {model.layer_sizes[0]} features, data has {dataset.n_features}")
    if head_kind_for(config.loss_kind) != model.head:
        raise InvalidInputError(f"loss {config.loss_kind!r} does not match the model's {model.head} head")
    rng = make_rng(config.seed)
    state = AdamState(m=[], v=[], lr=config.lr)
    params = model.parameters()
    # parameter arrays are views into one flat buffer so Adam runs as a handful of vector ops
    theta = _flatten(params)
    views = _unflatten(theta, params)
    weights, biases = views[0::2], views[1::2]
    m, v = np.zeros_like(theta), np.zeros_like(theta)
    g = np.empty_like(theta)
    g_views = _unflatten(g, params)
    X, y = dataset.X, dataset.labels
    n = len(dataset)
    trace = []
    t = 0
    for _ in range(config.epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            result, grads = _forward_backward(weights, biases, X[idx], y[idx], config.loss_kind, config.power)
            for dst, src in zip(g_views, grads):
                dst[...] = src
            t += 1
            _adam_update(theta, g, m, v, t, state)
            total += result.value * idx.size
        trace.append(total / n)
    trained = model.with_parameters([a.copy() for a in views])
    return trained, trace


def predict_labels(model: MlpModel, X, head_kind: str | None = None) -> np.ndarray:
    """Argmax for a softmax head (lowest index wins ties), CORN rule otherwise."""
    head = head_kind or model.head
    z = np.atleast_2d(model.logits(X))
    if head == "corn":
        return np.atleast_1d(corn_predict(z))
    return np.argmax(z, axis=1).astype(np.int64)


def save_checkpoint(model: MlpModel, path, meta: dict | None = None) -> None:
    """JSON checkpoint; floats are written with repr so loading is lossless."""
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "head": model.head,
        "layer_sizes": list(model.layer_sizes),
        "meta": meta or {},
        "weights": [W.tolist() for W in model.weights],
        "biases": [b.tolist() for b in model.biases],
    }
    Path(path).write_text(json.dumps(doc, indent=1) + "\n", encoding="utf-8")


def load_checkpoint(path) -> tuple[MlpModel, dict]:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise InvalidInputError(f"cannot read checkpoint {path}: {exc}") from None
    if doc.get("format") != CHECKPOINT_FORMAT or doc.get("version") != CHECKPOINT_VERSION:
        raise InvalidInputError(f"{path}: not a version {CHECKPOINT_VERSION} {CHECKPOINT_FORMAT} checkpoint")
    sizes = tuple(doc["layer_sizes"])
    weights = tuple(np.array(W, dtype=np.float64).reshape(o, i) for W, i, o in zip(doc["weights"], sizes[:-1], sizes[1:]))
    biases = tuple(np.array(b, dtype=np.float64) for b in doc["biases"])
    return MlpModel(sizes, weights, biases, doc["head"]), doc.get("meta", {})


__all__ = [
    "AdamState",
    "LossResult",
    "MlpModel",
    "TrainConfig",
    "adam_step",
    "build_model",
    "fit",
    "forward_backward",
    "load_checkpoint",
    "mlp_init",
    "predict_labels",
    "save_checkpoint",
]
