"""Differentiable classifiers with exact per-sample gradients.

Two model families: a linear classifier sign(w.x + b) with a per-parameter
trainable mask (so intercept-only training is just a mask), and a small
fully-connected network for the nonlinear experiments.  Parameters are
exposed as one flat float64 vector per model; for the network the layout is
row-major weight matrix then bias, layer by layer.

Per-sample parameter gradients are computed one example at a time (the
network loops over the batch; the linear case is the same arithmetic,
vectorized).  Input gradients, needed by the attacks, are batch-vectorized
for both families.

Models are value objects: updates build a new model via ``with_params``.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from scipy.special import expit

from .errors import ParameterError, ShapeError, UsageError

CHECKPOINT_VERSION = 1


class LossKind(enum.Enum):
    LOGISTIC_BINARY = "logistic_binary"  # labels in {-1, +1}, single output
    SOFTMAX_CE = "softmax_ce"  # integer class labels

    @classmethod
    def parse(cls, value) -> "LossKind":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ParameterError(
                f"unknown loss {value!r}; expected one of {[m.value for m in cls]}"
            ) from None


@dataclass(frozen=True)
class LinearModel:
    """Weights, intercept, and a trainable flag per parameter ([w..., b])."""

    w: np.ndarray
    b: float
    trainable_mask: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.w, dtype=np.float64)
        if w.ndim != 1:
            raise ShapeError(f"w must be 1-D, got shape {w.shape}")
        mask = np.asarray(self.trainable_mask, dtype=bool)
        if mask.shape != (w.shape[0] + 1,):
            raise ShapeError(
                f"trainable_mask must have shape ({w.shape[0] + 1},), got {mask.shape}"
            )
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "b", float(self.b))
        object.__setattr__(self, "trainable_mask", mask)

    @classmethod
    def init(cls, d: int, rng: np.random.Generator, *, train_w: bool = True,
             train_b: bool = True, b: float = 0.0) -> "LinearModel":
        """Weights uniform in [-1/sqrt(d), 1/sqrt(d)], intercept fixed at ``b``."""
        bound = 1.0 / np.sqrt(d)
        w = rng.uniform(-bound, bound, size=d)
        mask = np.array([train_w] * d + [train_b])
        return cls(w=w, b=b, trainable_mask=mask)

    @classmethod
    def ones(cls, d: int, *, train_w: bool = False, train_b: bool = True,
             b: float = 0.0) -> "LinearModel":
        """All-ones weights; by default only the intercept is trainable."""
        mask = np.array([train_w] * d + [train_b])
        return cls(w=np.ones(d), b=b, trainable_mask=mask)

    @property
    def d(self) -> int:
        return self.w.shape[0]

    @property
    def n_params(self) -> int:
        return self.d + 1

    @property
    def params(self) -> np.ndarray:
        return np.concatenate([self.w, [self.b]])

    def with_params(self, params: np.ndarray) -> "LinearModel":
        params = np.asarray(params, dtype=np.float64)
        if params.shape != (self.n_params,):
            raise ShapeError(f"expected {self.n_params} params, got shape {params.shape}")
        return replace(self, w=params[:-1].copy(), b=float(params[-1]))

    def margins(self, X: np.ndarray) -> np.ndarray:
        X = _check_inputs(X, self.d)
        return X @ self.w + self.b


@dataclass(frozen=True)
class MlpSpec:
    """Layer widths (input, hidden..., output) and activation name."""

    widths: tuple
    activation: str = "relu"

    def __post_init__(self):
        widths = tuple(int(v) for v in self.widths)
        if len(widths) < 3:
            raise ParameterError(
                f"need at least one hidden layer: widths {widths}"
            )
        if any(v < 1 for v in widths):
            raise ParameterError(f"all widths must be >= 1, got {widths}")
        if self.activation not in ("relu", "tanh"):
            raise ParameterError(
                f"activation must be 'relu' or 'tanh', got {self.activation!r}"
            )
        object.__setattr__(self, "widths", widths)


@dataclass(frozen=True)
class Mlp:
    """Fully-connected network; weights[i] has shape (fan_in, fan_out)."""

    spec: MlpSpec
    weights: tuple
    biases: tuple

    def __post_init__(self):
        widths = self.spec.widths
        if len(self.weights) != len(widths) - 1 or len(self.biases) != len(widths) - 1:
            raise ShapeError("layer count does not match spec widths")
        for i, (W, bias) in enumerate(zip(self.weights, self.biases)):
            if W.shape != (widths[i], widths[i + 1]) or bias.shape != (widths[i + 1],):
                raise ShapeError(f"layer {i} has shape {W.shape}, want "
                                 f"({widths[i]}, {widths[i + 1]})")

    @classmethod
    def init(cls, spec: MlpSpec, rng: np.random.Generator) -> "Mlp":
        """Uniform [-1/sqrt(fan_in), 1/sqrt(fan_in)] weights, zero biases."""
        weights, biases = [], []
        for fan_in, fan_out in zip(spec.widths[:-1], spec.widths[1:]):
            bound = 1.0 / np.sqrt(fan_in)
            weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
            biases.append(np.zeros(fan_out))
        return cls(spec=spec, weights=tuple(weights), biases=tuple(biases))

    @property
    def d(self) -> int:
        return self.spec.widths[0]

    @property
    def n_outputs(self) -> int:
        return self.spec.widths[-1]

    @property
    def n_params(self) -> int:
        return sum(W.size + b.size for W, b in zip(self.weights, self.biases))

    @property
    def params(self) -> np.ndarray:
        chunks = []
        for W, b in zip(self.weights, self.biases):
            chunks.append(W.ravel())
            chunks.append(b)
        return np.concatenate(chunks)

    def with_params(self, params: np.ndarray) -> "Mlp":
        params = np.asarray(params, dtype=np.float64)
        if params.shape != (self.n_params,):
            raise ShapeError(f"expected {self.n_params} params, got shape {params.shape}")
        weights, biases = [], []
        at = 0
        for W, b in zip(self.weights, self.biases):
            weights.append(params[at:at + W.size].reshape(W.shape).copy())
            at += W.size
            biases.append(params[at:at + b.size].copy())
            at += b.size
        return replace(self, weights=tuple(weights), biases=tuple(biases))

    def _activate(self, z: np.ndarray) -> np.ndarray:
        if self.spec.activation == "relu":
            return np.maximum(z, 0.0)
        return np.tanh(z)

    def _activate_grad(self, z: np.ndarray, a: np.ndarray) -> np.ndarray:
        if self.spec.activation == "relu":
            return (z > 0.0).astype(np.float64)
        return 1.0 - a * a

    def forward(self, X: np.ndarray):
        """Return (pre-activations, activations) per layer; the last entry is the output."""
        X = _check_inputs(X, self.d)
        zs, acts = [], [X]
        h = X
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ W + b
            zs.append(z)
            h = z if i == len(self.weights) - 1 else self._activate(z)
            acts.append(h)
        return zs, acts


def _check_inputs(X, d: int) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != d:
        raise ShapeError(f"inputs must have shape (n, {d}), got {X.shape}")
    return X


def _check_labels(model, y, loss: LossKind) -> np.ndarray:
    y = np.asarray(y)
    if y.ndim != 1:
        raise ShapeError(f"labels must be 1-D, got shape {y.shape}")
    n_out = 1 if isinstance(model, LinearModel) else model.n_outputs
    if loss is LossKind.LOGISTIC_BINARY:
        if n_out != 1:
            raise ShapeError("logistic_binary requires a single-output model")
        if not np.isin(y, (-1, 1)).all():
            raise ShapeError("logistic_binary labels must be in {-1, +1}")
        return y.astype(np.float64)
    if isinstance(model, LinearModel):
        raise ShapeError("softmax_ce needs a multi-output model")
    if not np.issubdtype(y.dtype, np.integer):
        raise ShapeError("softmax_ce labels must be integers")
    if y.min() < 0 or y.max() >= n_out:
        raise ShapeError(f"softmax_ce labels must lie in [0, {n_out})")
    return y


def validate_batch(model, X, y, loss: LossKind):
    """Shape/label-domain checks shared by training and evaluation entry points."""
    X = _check_inputs(X, model.d)
    yv = _check_labels(model, y, loss)
    return X, yv


def predict(model, X: np.ndarray) -> np.ndarray:
    """Hard labels; sign(0) counts as +1, argmax breaks ties at the lowest index."""
    if isinstance(model, LinearModel):
        return np.where(model.margins(X) >= 0.0, 1, -1).astype(np.int64)
    _, acts = model.forward(X)
    out = acts[-1]
    if model.n_outputs == 1:
        return np.where(out[:, 0] >= 0.0, 1, -1).astype(np.int64)
    return np.argmax(out, axis=1).astype(np.int64)


def _softmax_rows(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _output_loss_grad(out: np.ndarray, y: np.ndarray, loss: LossKind):
    """Per-sample loss values and dloss/doutput, both batch-shaped."""
    if loss is LossKind.LOGISTIC_BINARY:
        m = out[:, 0]
        z = y * m
        losses = np.logaddexp(0.0, -z)
        dout = (-y * expit(-z))[:, None]
        return losses, dout
    shifted = out - out.max(axis=1, keepdims=True)
    logz = np.log(np.exp(shifted).sum(axis=1))
    idx = np.arange(out.shape[0])
    losses = logz - shifted[idx, y]
    dout = _softmax_rows(out)
    dout[idx, y] -= 1.0
    return losses, dout


def per_sample_gradients(model, X, y, loss: LossKind = LossKind.LOGISTIC_BINARY):
    """Gradient of each sample's loss with respect to every parameter.

    Returns ``(G, losses)`` with ``G`` of shape (n, n_params) in the model's
    flat layout and ``losses`` of shape (n,).  Sample i's row is exactly the
    gradient of the loss evaluated on sample i alone.
    """
    loss = LossKind.parse(loss)
    if isinstance(model, LinearModel):
        X = _check_inputs(X, model.d)
        yv = _check_labels(model, y, loss)
        if X.shape[0] == 0:
            raise ShapeError("batch must be non-empty")
        m = X @ model.w + model.b
        losses, dout = _output_loss_grad(m[:, None], yv, loss)
        s = dout[:, 0]
        G = np.empty((X.shape[0], model.n_params))
        G[:, :-1] = s[:, None] * X
        G[:, -1] = s
        return G, losses

    X = _check_inputs(X, model.d)
    yv = _check_labels(model, y, loss)
    if X.shape[0] == 0:
        raise ShapeError("batch must be non-empty")
    n = X.shape[0]
    G = np.empty((n, model.n_params))
    losses = np.empty(n)
    for i in range(n):
        gi, li = _mlp_single_gradient(model, X[i], yv[i], loss)
        G[i] = gi
        losses[i] = li
    return G, losses


def _mlp_single_gradient(model: Mlp, x: np.ndarray, y, loss: LossKind):
    zs, acts = model.forward(x[None, :])
    out = acts[-1]
    y_arr = np.array([y]) if loss is LossKind.SOFTMAX_CE else np.asarray([y], dtype=np.float64)
    losses, dout = _output_loss_grad(out, y_arr, loss)
    delta = dout  # (1, fan_out of last layer)
    chunks = []
    for layer in range(len(model.weights) - 1, -1, -1):
        h_in = acts[layer]
        gW = h_in.T @ delta
        gb = delta[0]
        chunks.append(np.concatenate([gW.ravel(), gb]))
        if layer > 0:
            delta = delta @ model.weights[layer].T
            delta = delta * model._activate_grad(zs[layer - 1], acts[layer])
    flat = np.concatenate(list(reversed(chunks)))
    return flat, float(losses[0])


def batch_loss(model, X, y, loss: LossKind = LossKind.LOGISTIC_BINARY):
    """Mean loss over the batch (used by tests and finite differences)."""
    loss = LossKind.parse(loss)
    X = _check_inputs(X, model.d)
    yv = _check_labels(model, y, loss)
    if isinstance(model, LinearModel):
        out = (X @ model.w + model.b)[:, None]
    else:
        out = model.forward(X)[1][-1]
    losses, _ = _output_loss_grad(out, yv, loss)
    return float(losses.mean())


def input_gradients(model, X, y, loss: LossKind = LossKind.LOGISTIC_BINARY) -> np.ndarray:
    """Per-sample gradient of the loss with respect to the input, batch-vectorized."""
    loss = LossKind.parse(loss)
    X = _check_inputs(X, model.d)
    yv = _check_labels(model, y, loss)
    if isinstance(model, LinearModel):
        m = X @ model.w + model.b
        _, dout = _output_loss_grad(m[:, None], yv, loss)
        return dout[:, 0][:, None] * model.w[None, :]
    zs, acts = model.forward(X)
    _, delta = _output_loss_grad(acts[-1], yv, loss)
    for layer in range(len(model.weights) - 1, 0, -1):
        delta = delta @ model.weights[layer].T
        delta = delta * model._activate_grad(zs[layer - 1], acts[layer])
    return delta @ model.weights[0].T


def save_checkpoint(model, path) -> None:
    """Write the model as JSON: a spec header plus one flat parameter array."""
    if isinstance(model, LinearModel):
        header = {
            "kind": "linear",
            "d": model.d,
            "trainable_mask": [bool(v) for v in model.trainable_mask],
        }
    elif isinstance(model, Mlp):
        header = {
            "kind": "mlp",
            "widths": list(model.spec.widths),
            "activation": model.spec.activation,
        }
    else:
        raise ParameterError(f"cannot checkpoint {type(model).__name__}")
    doc = {
        "format_version": CHECKPOINT_VERSION,
        "model": header,
        "params": [float(v) for v in model.params],
    }
    Path(path).write_text(json.dumps(doc, indent=1) + "\n", encoding="utf-8")


def load_checkpoint(path):
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: not valid JSON ({exc})") from None
    if doc.get("format_version") != CHECKPOINT_VERSION:
        raise UsageError(
            f"{path}: unsupported checkpoint version {doc.get('format_version')!r}"
        )
    header = doc.get("model", {})
    params = np.asarray(doc.get("params", []), dtype=np.float64)
    kind = header.get("kind")
    if kind == "linear":
        d = int(header["d"])
        if params.shape != (d + 1,):
            raise UsageError(f"{path}: expected {d + 1} params, got {params.shape}")
        return LinearModel(
            w=params[:-1], b=float(params[-1]),
            trainable_mask=np.asarray(header["trainable_mask"], dtype=bool),
        )
    if kind == "mlp":
        spec = MlpSpec(widths=tuple(header["widths"]), activation=header["activation"])
        rng = np.random.default_rng(0)
        template = Mlp.init(spec, rng)
        if params.shape != (template.n_params,):
            raise UsageError(
                f"{path}: expected {template.n_params} params, got {params.shape}"
            )
        return template.with_params(params)
    raise UsageError(f"{path}: unknown model kind {kind!r}")
