"""Accuracy measurement and Pareto-frontier extraction.

Natural and robust accuracy are empirical fractions over a dataset.  For
linear models the robust fraction uses the exact worst-case margin (no
attack iterations, no looseness); other models are attacked with PGD at the
given configuration.  Robust accuracies are stored under string keys like
``rob_linf_0.075`` so run records round-trip through CSV unchanged.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .attacks import AttackConfig, pgd
from .data import Dataset
from .errors import UsageError
from .mixture import NormFamily
from .models import LinearModel, LossKind, predict


def attack_key(norm, gamma: float) -> str:
    """Canonical column/dict key for one (norm, gamma) attack."""
    return f"rob_{NormFamily.parse(norm).value}_{repr(float(gamma))}"


@dataclass
class RunRecord:
    """One training run: identity, per-epoch intercepts, and measured accuracies."""

    config_digest: str
    seed: int
    intercept_trace: list = field(default_factory=list)
    natural_accuracy: float | None = None
    robust_accuracy: dict = field(default_factory=dict)
    wall_time_s: float = 0.0
    metadata: dict = field(default_factory=dict)


def natural_accuracy(model, dataset: Dataset) -> float:
    """Fraction of samples classified correctly with no perturbation."""
    if len(dataset) == 0:
        raise UsageError("dataset is empty")
    return float(np.mean(predict(model, dataset.X) == dataset.y))


def robust_accuracy(model, dataset: Dataset, attack: AttackConfig,
                    loss=LossKind.LOGISTIC_BINARY,
                    rng: np.random.Generator | None = None) -> float:
    """Fraction still correct after the strongest allowed perturbation.

    Exact for linear models; PGD per the config otherwise.  Never exceeds
    the natural accuracy and equals it at gamma = 0.
    """
    if len(dataset) == 0:
        raise UsageError("dataset is empty")
    if isinstance(model, LinearModel):
        return _exact_linear_robust_accuracy(model, dataset, attack.gamma, attack.norm)
    adv = pgd(model, dataset.X, dataset.y, attack, loss, rng=rng)
    return float(np.mean(predict(model, adv) == dataset.y))


def _exact_linear_robust_accuracy(model: LinearModel, dataset: Dataset,
                                  gamma: float, norm) -> float:
    norm = NormFamily.parse(norm)
    margins = model.margins(dataset.X)
    if norm is NormFamily.LINF:
        dual = float(np.abs(model.w).sum())
    else:
        dual = float(np.linalg.norm(model.w))
    shift = gamma * dual
    # sign(0) = +1: a zero perturbed margin is predicted positive
    correct = np.where(dataset.y == 1, margins - shift >= 0.0, margins + shift < 0.0)
    return float(np.mean(correct))


def binomial_se(p: float, n: int) -> float:
    """Standard error of an empirical fraction."""
    return math.sqrt(max(p * (1.0 - p), 0.0) / n)


def pareto_frontier(records: list, gamma_key: str) -> list:
    """Records not dominated in (natural, robust) accuracy; ties are kept.

    A record dominates another when it is at least as good on both axes and
    strictly better on one; exact duplicates do not dominate each other, so
    repeated points all survive.  Output preserves input order.
    """
    points = []
    for i, rec in enumerate(records):
        if rec.natural_accuracy is None:
            raise UsageError(f"record {i} has no natural accuracy")
        if gamma_key not in rec.robust_accuracy:
            raise UsageError(
                f"record {i} has no robust accuracy under key {gamma_key!r}"
            )
        points.append((rec.natural_accuracy, rec.robust_accuracy[gamma_key], i))

    order = sorted(range(len(points)), key=lambda i: (-points[i][0], -points[i][1]))
    kept: list[int] = []
    best_rob = -math.inf
    best_nat = -math.inf
    for i in order:
        nat, rob, _ = points[i]
        if rob > best_rob or (rob == best_rob and nat == best_nat):
            kept.append(i)
            best_rob, best_nat = rob, nat
    kept.sort()
    return [records[i] for i in kept]
