"""Closed-form theory for a two-class Gaussian mixture with unequal variances.

The data model: labels are uniform on {-1, +1}; the positive class is drawn
from N(theta*1, (K*sigma)^2 I) and the negative class from N(-theta*1,
sigma^2 I), so the positive class is K times more spread out.  Because both
means sit on the all-ones diagonal, the best linear classifier has equal
weights, and everything interesting happens in the intercept.  This module
provides exact sampling, exact natural/robust error for any intercept (and
any weight vector), the optimal robust intercept for a given attack budget,
and the attack budget that makes a given intercept optimal.

Attack budgets are measured either in the max norm or the Euclidean norm of
the perturbation; the Euclidean case reduces to the max-norm case with
``gamma / sqrt(d)``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erfc

from .data import Dataset
from .errors import NumericError, ParameterError

_SQRT2 = math.sqrt(2.0)
# Beyond this the normal tail underflows double precision anyway.
_PHI_SATURATE = 38.0


def _phi(x: np.ndarray) -> np.ndarray:
    out = 0.5 * erfc(-x / _SQRT2)
    out = np.where(x < -_PHI_SATURATE, 0.0, out)
    return np.where(x > _PHI_SATURATE, 1.0, out)


def normal_cdf(x):
    """Standard normal CDF via the complementary error function.

    Accurate to ~1e-16 absolute over the whole real line; arguments beyond
    +-38 are saturated to exactly 0/1.
    """
    out = _phi(np.asarray(x, dtype=np.float64))
    if out.ndim == 0:
        return float(out)
    return out


class NormFamily(enum.Enum):
    """Perturbation ball shape for adversarial attacks."""

    LINF = "linf"
    L2 = "l2"

    @classmethod
    def parse(cls, value) -> "NormFamily":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ParameterError(
                f"unknown norm family {value!r}; expected one of "
                f"{[m.value for m in cls]}"
            ) from None


@dataclass(frozen=True)
class MixtureSpec:
    """Parameters of the mixture: mean coordinate, base std, variance ratio, dimension."""

    theta: float
    sigma: float
    K: float
    d: int

    def __post_init__(self):
        if not (self.theta > 0):
            raise ParameterError(f"theta must be > 0, got {self.theta}")
        if not (self.sigma > 0):
            raise ParameterError(f"sigma must be > 0, got {self.sigma}")
        if not (self.K > 1):
            raise ParameterError(f"K must be > 1, got {self.K}")
        if not (isinstance(self.d, (int, np.integer)) and self.d >= 1):
            raise ParameterError(f"d must be a positive integer, got {self.d}")


@dataclass(frozen=True)
class InterceptPair:
    """The two stationary intercepts of the robust error; b_minus is the minimizer."""

    b_minus: float
    b_plus: float

    def __post_init__(self):
        if self.b_minus > self.b_plus:
            raise ParameterError("b_minus must not exceed b_plus")


def sample(spec: MixtureSpec, n: int, rng: np.random.Generator) -> Dataset:
    """Draw ``n`` labelled points from the mixture.

    Labels first, then one block of standard normals, so the draw is a pure
    function of the generator state.
    """
    if n < 1:
        raise ParameterError(f"n must be >= 1, got {n}")
    y = rng.integers(0, 2, size=n) * 2 - 1
    z = rng.standard_normal((n, spec.d))
    scale = np.where(y[:, None] == 1, spec.K * spec.sigma, spec.sigma)
    mean = np.where(y[:, None] == 1, spec.theta, -spec.theta)
    return Dataset(X=mean + scale * z, y=y.astype(np.int64))


def q_of_k(K: float) -> float:
    """The constant 2*ln(K) / (K^2 - 1); strictly positive for K > 1."""
    if not (K > 1):
        raise ParameterError(f"K must be > 1, got {K}")
    return 2.0 * math.log(K) / (K * K - 1.0)


def _effective_gamma(spec: MixtureSpec, gamma: float, norm: NormFamily) -> float:
    if gamma < 0:
        raise ParameterError(f"gamma must be >= 0, got {gamma}")
    norm = NormFamily.parse(norm)
    if norm is NormFamily.L2:
        return gamma / math.sqrt(spec.d)
    return gamma


def robust_error_intercept(spec: MixtureSpec, b, gamma: float, norm=NormFamily.LINF):
    """Exact worst-case error of sign(sum(x) + b) under a ``gamma`` attack.

    ``gamma = 0`` gives the natural error.  ``b`` may be an array; the result
    broadcasts.
    """
    g = _effective_gamma(spec, gamma, norm)
    b = np.asarray(b, dtype=np.float64)
    sd = math.sqrt(spec.d)
    shift = sd * (spec.theta - g) / spec.sigma
    scaled_b = b / (sd * spec.sigma)
    err = 0.5 * _phi(-shift + scaled_b) + 0.5 * _phi(
        -shift / spec.K - scaled_b / spec.K
    )
    if err.ndim == 0:
        return float(err)
    return err


def optimal_intercepts(
    spec: MixtureSpec, gamma: float, norm=NormFamily.LINF
) -> InterceptPair:
    """Both roots of the intercept stationarity condition for budget ``gamma``.

    The lower root minimizes the robust error; the upper root is the other
    stationary point (a local maximum of accuracy is impossible here, the
    error increases between the roots).
    """
    g = _effective_gamma(spec, gamma, norm)
    K, d = spec.K, spec.d
    q = q_of_k(K)
    mean_term = (K * K + 1.0) / (K * K - 1.0) * d * (spec.theta - g)
    radical = K * math.sqrt(
        4.0 * d * d * (spec.theta - g) ** 2 / (K * K - 1.0) ** 2
        + d * spec.sigma * spec.sigma * q
    )
    return InterceptPair(b_minus=mean_term - radical, b_plus=mean_term + radical)


def optimal_robust_error(spec: MixtureSpec, gamma: float, norm=NormFamily.LINF) -> float:
    """Minimum achievable robust error over all linear classifiers."""
    g = _effective_gamma(spec, gamma, norm)
    K = spec.K
    q = q_of_k(K)
    B = 2.0 / (K * K - 1.0) * math.sqrt(spec.d) * (spec.theta - g) / spec.sigma
    root = math.sqrt(B * B + q)
    return float(
        0.5 * _phi(np.float64(B - K * root)) + 0.5 * _phi(np.float64(-K * B + root))
    )


def find_gamma_star(
    spec: MixtureSpec,
    b_dp: float,
    *,
    tol: float = 1e-10,
    max_iter: int = 200,
) -> float:
    """Attack budget at which ``b_dp`` is the optimal robust intercept.

    The optimal intercept decreases strictly from b_0 (at gamma = 0) to
    -infinity, so for any ``b_dp`` below b_0 there is exactly one crossing;
    we bracket it by doubling and then bisect.  Max-norm budgets throughout.
    """
    b0 = optimal_intercepts(spec, 0.0).b_minus
    if not (b_dp < b0):
        raise ParameterError(
            f"b_dp must be below the natural optimum b_0={b0!r}, got {b_dp!r}"
        )

    def gap(g: float) -> float:
        return optimal_intercepts(spec, g).b_minus - b_dp

    lo, hi = 0.0, spec.theta
    for _ in range(max_iter):
        if gap(hi) <= 0.0:
            break
        lo, hi = hi, 2.0 * hi
    else:
        raise NumericError(f"could not bracket gamma* for b_dp={b_dp!r}")

    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if hi - lo <= tol:
            break
        if gap(mid) > 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def pareto_premise(spec: MixtureSpec, gamma: float) -> bool:
    """Whether (K^2+1)/(2K) * gamma < |theta - gamma| + |theta| holds.

    When true, every intercept with better natural error than a given one in
    (b_gamma, b_0) has worse robust error, i.e. those intercepts trace a
    Pareto frontier.
    """
    if gamma < 0:
        raise ParameterError(f"gamma must be >= 0, got {gamma}")
    K = spec.K
    lhs = (K * K + 1.0) / (2.0 * K) * gamma
    rhs = abs(spec.theta - gamma) + abs(spec.theta)
    return bool(lhs < rhs)


def robust_error_general(
    spec: MixtureSpec, w, b: float, gamma: float, norm=NormFamily.LINF
) -> float:
    """Exact worst-case error of sign(w.x + b) for an arbitrary weight vector.

    The margin w.x is one-dimensional Gaussian under each class, and the
    strongest perturbation shifts it by gamma times the dual norm of w
    (sum of |w_j| for max-norm balls, Euclidean norm for Euclidean balls).
    """
    if gamma < 0:
        raise ParameterError(f"gamma must be >= 0, got {gamma}")
    norm = NormFamily.parse(norm)
    w = np.asarray(w, dtype=np.float64)
    if w.ndim != 1 or w.shape[0] != spec.d:
        raise ParameterError(f"w must have shape ({spec.d},), got {w.shape}")
    l2 = float(np.linalg.norm(w))
    if l2 == 0.0:
        raise ParameterError("w must not be the zero vector")
    dual = float(np.abs(w).sum()) if norm is NormFamily.LINF else l2
    mean_margin = spec.theta * float(w.sum())
    shift = gamma * dual
    err_neg = normal_cdf((b - mean_margin + shift) / (spec.sigma * l2))
    err_pos = normal_cdf((shift - mean_margin - b) / (spec.K * spec.sigma * l2))
    return float(0.5 * err_neg + 0.5 * err_pos)
