"""Adversarial example generation: exact linear worst case, FGSM, BIM, PGD.

For a linear model the strongest perturbation inside the ball has a closed
form (move every coordinate against the label along sign(w) for max-norm
balls, along w/||w|| for Euclidean balls); the iterative attacks exist for
everything else and are tested to reproduce the closed form on linear
models.  Iterates are projected back onto the ball around the original
input after every step, so the output is inside the ball no matter how
large the step size is.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError
from .mixture import NormFamily
from .models import LinearModel, LossKind, input_gradients, validate_batch


@dataclass(frozen=True)
class AttackConfig:
    """Ball shape and budget plus the iteration schedule.

    ``step_size=None`` means 2.5 * gamma / steps, a schedule that can cross
    the ball and rely on the projection.  ``clamp`` optionally restricts
    inputs to a box (off by default; mixture features are unbounded).
    """

    norm: NormFamily
    gamma: float
    steps: int = 20
    step_size: float | None = None
    random_start: bool = False
    clamp: tuple | None = None

    def __post_init__(self):
        object.__setattr__(self, "norm", NormFamily.parse(self.norm))
        if self.gamma < 0:
            raise ParameterError(f"gamma must be >= 0, got {self.gamma}")
        if self.steps < 1:
            raise ParameterError(f"steps must be >= 1, got {self.steps}")
        if self.step_size is not None and not (self.step_size > 0):
            raise ParameterError(f"step_size must be > 0, got {self.step_size}")

    @property
    def effective_step(self) -> float:
        if self.step_size is not None:
            return self.step_size
        return 2.5 * self.gamma / self.steps


def worst_case_linear(model: LinearModel, X, y, gamma: float, norm) -> np.ndarray:
    """The margin-minimizing perturbation for each sample of a linear model."""
    norm = NormFamily.parse(norm)
    if gamma < 0:
        raise ParameterError(f"gamma must be >= 0, got {gamma}")
    if not np.any(model.w):
        raise ParameterError("weight vector is zero; no attack direction")
    X, yv = validate_batch(model, X, y, LossKind.LOGISTIC_BINARY)
    if norm is NormFamily.LINF:
        direction = np.sign(model.w)[None, :]
    else:
        direction = (model.w / np.linalg.norm(model.w))[None, :]
    return -yv[:, None] * gamma * direction


def fgsm(model, X, y, gamma: float, loss=LossKind.LOGISTIC_BINARY,
         clamp: tuple | None = None) -> np.ndarray:
    """Single step of gamma times the sign of the input gradient."""
    if gamma < 0:
        raise ParameterError(f"gamma must be >= 0, got {gamma}")
    X = np.asarray(X, dtype=np.float64)
    g = input_gradients(model, X, y, loss)
    adv = X + gamma * np.sign(g)
    if clamp is not None:
        adv = np.clip(adv, clamp[0], clamp[1])
    return adv


def _project(delta: np.ndarray, gamma: float, norm: NormFamily) -> np.ndarray:
    if norm is NormFamily.LINF:
        return np.clip(delta, -gamma, gamma)
    norms = np.linalg.norm(delta, axis=1)
    over = norms > gamma
    if np.any(over):
        delta = delta.copy()
        delta[over] = delta[over] * (gamma / norms[over])[:, None]
    return delta


def _random_start(shape, gamma: float, norm: NormFamily, rng: np.random.Generator):
    if norm is NormFamily.LINF:
        return rng.uniform(-gamma, gamma, size=shape)
    direction = rng.standard_normal(shape)
    norms = np.linalg.norm(direction, axis=1, keepdims=True)
    norms[norms == 0.0] = 1.0
    radius = gamma * rng.random(shape[0]) ** (1.0 / shape[1])
    return direction / norms * radius[:, None]


def pgd(model, X, y, cfg: AttackConfig, loss=LossKind.LOGISTIC_BINARY,
        rng: np.random.Generator | None = None) -> np.ndarray:
    """Iterative projected ascent on the loss; BIM is this without random start."""
    X = np.asarray(X, dtype=np.float64)
    validate_batch(model, X, y, LossKind.parse(loss))
    if cfg.gamma == 0.0:
        return X.copy()
    if cfg.random_start:
        if rng is None:
            raise ParameterError("random_start requires an rng")
        delta = _random_start(X.shape, cfg.gamma, cfg.norm, rng)
    else:
        delta = np.zeros_like(X)
    alpha = cfg.effective_step
    for _ in range(cfg.steps):
        adv = X + delta
        if cfg.clamp is not None:
            adv = np.clip(adv, cfg.clamp[0], cfg.clamp[1])
        g = input_gradients(model, adv, y, loss)
        if cfg.norm is NormFamily.LINF:
            stepv = alpha * np.sign(g)
        else:
            norms = np.linalg.norm(g, axis=1, keepdims=True)
            stepv = alpha * np.divide(g, norms, out=np.zeros_like(g), where=norms > 0.0)
        delta = _project(delta + stepv, cfg.gamma, cfg.norm)
    adv = X + delta
    if cfg.clamp is not None:
        adv = np.clip(adv, cfg.clamp[0], cfg.clamp[1])
    return adv


def bim(model, X, y, cfg: AttackConfig, loss=LossKind.LOGISTIC_BINARY) -> np.ndarray:
    """Basic iterative method: PGD from the clean input, no randomization."""
    if cfg.random_start:
        cfg = AttackConfig(norm=cfg.norm, gamma=cfg.gamma, steps=cfg.steps,
                           step_size=cfg.step_size, random_start=False, clamp=cfg.clamp)
    return pgd(model, X, y, cfg, loss)
