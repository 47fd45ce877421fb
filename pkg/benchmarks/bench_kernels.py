"""Benchmark the fused per-sample clip/sum kernel: numba vs pure numpy.

Run:
    python3 benchmarks/bench_kernels.py

The second section times a full training run through each backend by
re-launching the interpreter with DPROBUST_NUMBA toggled, since the backend
is chosen at import time.
"""

import os
import subprocess
import sys
import time

import numpy as np

from dprobust._kernels import (
    CLIP_STANDARD,
    linear_logistic_grad_sum_numba,
    linear_logistic_grad_sum_numpy,
)

TRAIN_SNIPPET = """
import time
import numpy as np
import dprobust as dpr
from dprobust._kernels import backend

spec = dpr.MixtureSpec(theta=1.0, sigma=0.2, K=4.0, d=2)
data = dpr.sample(spec, 10_000, np.random.default_rng(0))
dp = dpr.DPConfig(clip=dpr.ClipMode.standard(0.1), noise_multiplier=1.0)
opt = dpr.OptimizerConfig.sgd(8.0)
model = dpr.LinearModel.ones(2)
dpr.train(data, model, "logistic_binary", dp, opt, 1, 1000, 0)  # warm up jit
t0 = time.perf_counter()
res = dpr.train(data, model, "logistic_binary", dp, opt, 50, 1000, 0)
print(f"  backend={backend():<6} 50 epochs x 10 batches of 1000: "
      f"{time.perf_counter() - t0:.3f}s (final b={res.model.b:+.4f})")
"""


def bench_kernel(fn, X, y, w, b, mask, repeats):
    fn(X, y, w, b, mask, CLIP_STANDARD, 0.1)  # warm up / compile
    t0 = time.perf_counter()
    for _ in range(repeats):
        fn(X, y, w, b, mask, CLIP_STANDARD, 0.1)
    return (time.perf_counter() - t0) / repeats


def main():
    rng = np.random.default_rng(0)
    print("fused per-sample gradient + clip + sum (standard clip, R=0.1)")
    for n, d, repeats in [(1_000, 2, 2000), (1_000, 32, 1000), (10_000, 2, 400),
                          (100_000, 16, 20)]:
        X = rng.normal(size=(n, d))
        y = rng.choice([-1.0, 1.0], size=n)
        w = rng.normal(size=d)
        b = 0.1
        mask = np.ones(d + 1, dtype=bool)
        t_np = bench_kernel(linear_logistic_grad_sum_numpy, X, y, w, b, mask, repeats)
        if linear_logistic_grad_sum_numba is not None:
            t_nb = bench_kernel(linear_logistic_grad_sum_numba, X, y, w, b, mask, repeats)
            ratio = f"{t_np / t_nb:5.2f}x"
        else:
            t_nb, ratio = float("nan"), "  n/a"
        print(f"  n={n:>7} d={d:>3}: numpy {t_np * 1e6:9.1f} us | "
              f"numba {t_nb * 1e6:9.1f} us | speedup {ratio}")

    print("\nend-to-end training (boxplot-sized run)", flush=True)
    for flag in ("1", "0"):
        subprocess.run([sys.executable, "-c", TRAIN_SNIPPET],
                       env={**os.environ, "DPROBUST_NUMBA": flag}, check=True)


if __name__ == "__main__":
    main()
