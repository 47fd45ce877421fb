"""Hot inner-loop kernels with a numba fast path and a pure-numpy fallback.

The single hot spot of this package is the per-sample gradient / clip / sum
step of linear-model logistic training: it runs once per minibatch for
hundreds of steps per run and thousands of runs per sweep.  Both
implementations compute, for every sample, the logistic-loss gradient of
(w, b), zero out frozen coordinates, clip the per-sample vector, and
accumulate the sum in index order.

Backend selection: numba is used when importable unless the environment
variable ``DPROBUST_NUMBA`` is set to ``0``/``false``/``no`` (checked at
import time).  ``benchmarks/bench_kernels.py`` compares the two paths.

Clipping kinds: 0 = none, 1 = rescale to norm R when above it, 2 = normalize
to unit norm.  Saturated rescaling is computed as ``(g / ||g||) * R`` so that
it equals ``R *`` the unit-normalized gradient bit for bit.
"""

from __future__ import annotations

import os

import numpy as np
from scipy.special import expit

CLIP_NONE = 0
CLIP_STANDARD = 1
CLIP_AUTOMATIC = 2


def linear_logistic_grad_sum_numpy(X, y, w, b, mask, clip_kind, R):
    """Vectorized reference implementation.

    Returns ``(grad_sum, loss_sum)`` where ``grad_sum`` has length d+1
    (weight coordinates then intercept) with frozen coordinates exactly zero.
    """
    n, d = X.shape
    m = X @ w + b
    z = y * m
    s = -y * expit(-z)
    G = np.empty((n, d + 1), dtype=np.float64)
    G[:, :d] = s[:, None] * X
    G[:, d] = s
    if not mask.all():
        G[:, ~mask] = 0.0
    if clip_kind != CLIP_NONE:
        norms = np.sqrt(np.einsum("ij,ij->i", G, G))
        nonzero = norms > 0.0
        if clip_kind == CLIP_STANDARD:
            hit = nonzero & (norms > R)
            unit = G[hit] / norms[hit, None]
            G[hit] = unit * R
        else:
            G[nonzero] = G[nonzero] / norms[nonzero, None]
    loss_sum = float(np.logaddexp(0.0, -z).sum())
    return G.sum(axis=0), loss_sum


def _make_numba_kernel():
    from numba import njit

    @njit(cache=True)
    def kernel(X, y, w, b, mask, clip_kind, R):
        n, d = X.shape
        gsum = np.zeros(d + 1)
        g = np.empty(d + 1)
        loss_sum = 0.0
        for i in range(n):
            m = b
            for j in range(d):
                m += w[j] * X[i, j]
            z = y[i] * m
            if z >= 0.0:
                t = np.exp(-z)
                sig = t / (1.0 + t)
                loss_sum += np.log1p(t)
            else:
                sig = 1.0 / (1.0 + np.exp(z))
                loss_sum += -z + np.log1p(np.exp(z))
            s = -y[i] * sig
            for j in range(d):
                g[j] = s * X[i, j] if mask[j] else 0.0
            g[d] = s if mask[d] else 0.0
            if clip_kind != 0:
                sq = 0.0
                for j in range(d + 1):
                    sq += g[j] * g[j]
                norm = np.sqrt(sq)
                if norm > 0.0:
                    if clip_kind == 1:
                        if norm > R:
                            for j in range(d + 1):
                                g[j] = (g[j] / norm) * R
                    else:
                        for j in range(d + 1):
                            g[j] = g[j] / norm
            for j in range(d + 1):
                gsum[j] += g[j]
        return gsum, loss_sum

    return kernel


def _numba_enabled() -> bool:
    flag = os.environ.get("DPROBUST_NUMBA", "1").strip().lower()
    return flag not in ("0", "false", "no", "off")


linear_logistic_grad_sum_numba = None
if _numba_enabled():
    try:
        linear_logistic_grad_sum_numba = _make_numba_kernel()
    except ImportError:  # pragma: no cover - numba is a hard dep, but stay usable
        linear_logistic_grad_sum_numba = None

if linear_logistic_grad_sum_numba is not None:
    linear_logistic_grad_sum = linear_logistic_grad_sum_numba
    BACKEND = "numba"
else:
    linear_logistic_grad_sum = linear_logistic_grad_sum_numpy
    BACKEND = "numpy"


def backend() -> str:
    """Name of the active kernel backend ("numba" or "numpy")."""
    return BACKEND
