"""Per-sample clipping, gradient privatization, and DP optimizers.

The privatized batch gradient is the sum of per-sample clipped gradients
plus Gaussian noise scaled by noise_multiplier * R (R = 1 for normalizing
clip), exactly one noise draw per batch.  Optimizers (SGD, heavy-ball
momentum, Adam, RMSprop) then apply their usual update to the privatized
sum divided by the batch size.  With ``dp=None`` training uses the raw mean
gradient.

Training is deterministic given (config, seed): one generator drives the
epoch shuffles and the noise draws in a fixed order.  One run owns its
state; independent runs can execute concurrently.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .data import Dataset
from .errors import NumericError, ParameterError, UsageError
from .models import LinearModel, LossKind, per_sample_gradients, validate_batch

STANDARD = "standard"
AUTOMATIC = "automatic"


@dataclass(frozen=True)
class ClipMode:
    """Per-sample clipping rule: rescale into an R-ball, or normalize to unit norm."""

    kind: str
    R: float | None = None

    def __post_init__(self):
        if self.kind not in (STANDARD, AUTOMATIC):
            raise ParameterError(f"clip kind must be standard|automatic, got {self.kind!r}")
        if self.kind == STANDARD:
            if self.R is None or not (self.R > 0):
                raise ParameterError(f"standard clipping needs R > 0, got {self.R}")
        elif self.R is not None:
            raise ParameterError("automatic clipping takes no R")

    @classmethod
    def standard(cls, R: float) -> "ClipMode":
        return cls(kind=STANDARD, R=float(R))

    @classmethod
    def automatic(cls) -> "ClipMode":
        return cls(kind=AUTOMATIC)

    @property
    def r_eff(self) -> float:
        """Norm bound after clipping; the noise scale is noise_multiplier * r_eff."""
        return self.R if self.kind == STANDARD else 1.0


@dataclass(frozen=True)
class DPConfig:
    clip: ClipMode
    noise_multiplier: float = 0.0

    def __post_init__(self):
        if self.noise_multiplier < 0:
            raise ParameterError(
                f"noise_multiplier must be >= 0, got {self.noise_multiplier}"
            )


@dataclass(frozen=True)
class OptimizerConfig:
    kind: str
    lr: float
    momentum: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps_adam: float = 1e-8
    alpha: float = 0.99
    eps_rms: float = 1e-8

    def __post_init__(self):
        if self.kind not in ("sgd", "adam", "rmsprop"):
            raise ParameterError(f"optimizer must be sgd|adam|rmsprop, got {self.kind!r}")
        if not (self.lr > 0):
            raise ParameterError(f"learning rate must be > 0, got {self.lr}")
        for name in ("momentum", "beta1", "beta2", "alpha"):
            v = getattr(self, name)
            if not (0.0 <= v < 1.0):
                raise ParameterError(f"{name} must be in [0, 1), got {v}")
        if self.eps_adam < 0 or self.eps_rms < 0:
            raise ParameterError("stabilizers must be >= 0")

    @classmethod
    def sgd(cls, lr: float, momentum: float = 0.0) -> "OptimizerConfig":
        return cls(kind="sgd", lr=lr, momentum=momentum)

    @classmethod
    def adam(cls, lr: float, beta1: float = 0.9, beta2: float = 0.999,
             eps: float = 1e-8) -> "OptimizerConfig":
        return cls(kind="adam", lr=lr, beta1=beta1, beta2=beta2, eps_adam=eps)

    @classmethod
    def rmsprop(cls, lr: float, alpha: float = 0.99, eps: float = 1e-8) -> "OptimizerConfig":
        return cls(kind="rmsprop", lr=lr, alpha=alpha, eps_rms=eps)


@dataclass
class OptimizerState:
    """First/second moment buffers plus the Adam step counter."""

    t: int
    m: np.ndarray
    v: np.ndarray


def init_state(n_params: int) -> OptimizerState:
    return OptimizerState(t=0, m=np.zeros(n_params), v=np.zeros(n_params))


def clip(g, mode: ClipMode) -> np.ndarray:
    """Clip one gradient vector.

    Rescaling is computed as ``(g / norm) * R`` when the norm exceeds R, so a
    saturated standard clip equals R times the unit-normalized gradient bit
    for bit.  An exactly-zero gradient passes through either mode unchanged.
    """
    g = np.asarray(g, dtype=np.float64)
    if not np.isfinite(g).all():
        raise NumericError("gradient has non-finite entries")
    norm = float(np.linalg.norm(g))
    if norm == 0.0:
        return g.copy()
    if mode.kind == STANDARD:
        if norm > mode.R:
            return (g / norm) * mode.R
        return g.copy()
    return g / norm


def privatize(per_sample_grads, config: DPConfig, rng: np.random.Generator) -> np.ndarray:
    """Sum of clipped per-sample gradients plus one Gaussian noise draw.

    With noise_multiplier = 0 the result is exactly the clipped sum and the
    generator is not consumed.
    """
    G = np.asarray(per_sample_grads, dtype=np.float64)
    if G.ndim != 2 or G.shape[0] == 0:
        raise ParameterError(f"need a non-empty (n, p) gradient array, got shape {G.shape}")
    total = _clipped_row_sum(G, config.clip)
    if config.noise_multiplier > 0:
        total = total + config.noise_multiplier * config.clip.r_eff * rng.standard_normal(
            G.shape[1]
        )
    return total


def _clipped_row_sum(G: np.ndarray, mode: ClipMode) -> np.ndarray:
    if not np.isfinite(G).all():
        raise NumericError("gradients have non-finite entries")
    G = G.copy()
    norms = np.sqrt(np.einsum("ij,ij->i", G, G))
    nonzero = norms > 0.0
    if mode.kind == STANDARD:
        hit = nonzero & (norms > mode.R)
        G[hit] = (G[hit] / norms[hit, None]) * mode.R
    else:
        G[nonzero] = G[nonzero] / norms[nonzero, None]
    return G.sum(axis=0)


def step(state: OptimizerState, params: np.ndarray, privatized_grad: np.ndarray,
         opt: OptimizerConfig, batch_size: int):
    """One optimizer update on the mean gradient; returns (new_params, new_state)."""
    if state is None:
        raise UsageError("optimizer state not initialized; call init_state first")
    params = np.asarray(params, dtype=np.float64)
    g = np.asarray(privatized_grad, dtype=np.float64) / batch_size
    if state.m.shape != params.shape or g.shape != params.shape:
        raise UsageError(
            f"state/gradient shape mismatch: params {params.shape}, "
            f"m {state.m.shape}, grad {g.shape}"
        )
    t = state.t + 1
    if opt.kind == "sgd":
        if opt.momentum > 0.0:
            m = opt.momentum * state.m + g
            new = params - opt.lr * m
            return new, OptimizerState(t=t, m=m, v=state.v.copy())
        return params - opt.lr * g, OptimizerState(t=t, m=state.m.copy(), v=state.v.copy())
    if opt.kind == "adam":
        m = opt.beta1 * state.m + (1.0 - opt.beta1) * g
        v = opt.beta2 * state.v + (1.0 - opt.beta2) * g * g
        m_hat = m / (1.0 - opt.beta1 ** t)
        v_hat = v / (1.0 - opt.beta2 ** t)
        denom = np.sqrt(v_hat) + opt.eps_adam
        # denom can only vanish for eps=0 with an all-zero gradient history,
        # in which case the update is zero too
        upd = np.divide(m_hat, denom, out=np.zeros_like(m_hat), where=denom > 0.0)
        return params - opt.lr * upd, OptimizerState(t=t, m=m, v=v)
    # rmsprop: second moment only, stabilizer inside the root
    v = opt.alpha * state.v + (1.0 - opt.alpha) * g * g
    denom = np.sqrt(v + opt.eps_rms)
    upd = np.divide(g, denom, out=np.zeros_like(g), where=denom > 0.0)
    return params - opt.lr * upd, OptimizerState(t=t, m=state.m.copy(), v=v)


@dataclass
class TrainResult:
    """Final model plus a per-epoch snapshot of the full parameter vector."""

    model: object
    params_trace: np.ndarray  # (epochs + 1, n_params), row 0 is the init
    epoch_losses: list = field(default_factory=list)
    wall_time_s: float = 0.0

    @property
    def intercept_trace(self) -> np.ndarray:
        return self.params_trace[:, -1]


def _trainable_indices(model) -> np.ndarray:
    if isinstance(model, LinearModel):
        return np.flatnonzero(model.trainable_mask)
    return np.arange(model.n_params)


def train(dataset: Dataset, model, loss, dp: DPConfig | None,
          opt: OptimizerConfig, epochs: int, batch_size: int, seed: int) -> TrainResult:
    """Minibatch training loop, privatized when ``dp`` is given.

    Each epoch visits a fresh shuffle in fixed-size batches (a trailing
    partial batch is dropped).  Linear models with logistic loss go through
    the fused clip/sum kernel; everything else takes the generic per-sample
    gradient route.  Bit-reproducible for fixed (config, seed).
    """
    loss = LossKind.parse(loss)
    n = len(dataset)
    if n == 0:
        raise UsageError("dataset is empty")
    if not (1 <= batch_size <= n):
        raise UsageError(f"batch_size must be in [1, {n}], got {batch_size}")
    if epochs < 0:
        raise UsageError(f"epochs must be >= 0, got {epochs}")

    validate_batch(model, dataset.X, dataset.y, loss)
    if not np.isfinite(dataset.X).all():
        raise NumericError("dataset has non-finite features")
    t_start = time.perf_counter()
    rng = np.random.default_rng(seed)
    tidx = _trainable_indices(model)
    params = model.params
    state = init_state(tidx.size)

    if dp is None:
        clip_kind, R = _kernels.CLIP_NONE, 0.0
    elif dp.clip.kind == STANDARD:
        clip_kind, R = _kernels.CLIP_STANDARD, dp.clip.R
    else:
        clip_kind, R = _kernels.CLIP_AUTOMATIC, 0.0

    fast = isinstance(model, LinearModel) and loss is LossKind.LOGISTIC_BINARY
    if fast:
        mask = model.trainable_mask.copy()
        y_signed = dataset.y.astype(np.float64)

    trace = np.empty((epochs + 1, params.size))
    trace[0] = params
    epoch_losses = []
    steps_per_epoch = n // batch_size

    for epoch in range(epochs):
        perm = rng.permutation(n)
        loss_acc = 0.0
        for k in range(steps_per_epoch):
            idx = perm[k * batch_size:(k + 1) * batch_size]
            if fast:
                gsum_full, loss_sum = _kernels.linear_logistic_grad_sum(
                    dataset.X[idx], y_signed[idx], params[:-1], params[-1],
                    mask, clip_kind, R,
                )
                gsum = gsum_full[tidx]
                loss_acc += loss_sum
            else:
                G, losses = per_sample_gradients(
                    model.with_params(params), dataset.X[idx], dataset.y[idx], loss
                )
                Gt = G[:, tidx]
                if dp is None:
                    gsum = Gt.sum(axis=0)
                else:
                    gsum = _clipped_row_sum(Gt, dp.clip)
                loss_acc += float(losses.sum())
            if dp is not None and dp.noise_multiplier > 0:
                gsum = gsum + dp.noise_multiplier * dp.clip.r_eff * rng.standard_normal(
                    tidx.size
                )
            sub, state = step(state, params[tidx], gsum, opt, batch_size)
            params = params.copy()
            params[tidx] = sub
        trace[epoch + 1] = params
        epoch_losses.append(loss_acc / (steps_per_epoch * batch_size))

    return TrainResult(
        model=model.with_params(params),
        params_trace=trace,
        epoch_losses=epoch_losses,
        wall_time_s=time.perf_counter() - t_start,
    )
