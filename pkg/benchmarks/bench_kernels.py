#!/usr/bin/env python3
"""Benchmark the compiled kernel core against the pure-numpy fallback.

Run from the repository root after an editable install:

    python3 benchmarks/bench_kernels.py

Times the three hot kernels on both implementations, plus one end-to-end
polymer pass through the dispatch layer (the fallback is selected there via
QUENCHLAB_PURE_PYTHON=1 in a subprocess).
"""

import os
import subprocess
import sys
import time
from statistics import median

import numpy as np

from quenchlab._kernels import _ref

CASES = []


def case(name):
    def wrap(fn):
        CASES.append((name, fn))
        return fn

    return wrap


@case("transfer step 401x401 (SRW d=2)")
def _case_step(impl):
    rng = np.random.default_rng(0)
    arr = rng.random((401, 401))
    kvals = np.array([0.25, 0.25, 0.25, 0.25])
    koffs = np.array([[-1, 0], [1, 0], [0, -1], [0, 1]], dtype=np.int64)
    return lambda: impl.shift_kernel_sum(arr, kvals, koffs, 201)


@case("corner growth 512x512")
def _case_lpp(impl):
    x = np.random.default_rng(1).exponential(size=(512, 512))
    return lambda: impl.lpp_grid(x)


@case("grid Dijkstra 256x256")
def _case_fpp(impl):
    rng = np.random.default_rng(2)
    eh = rng.exponential(size=(255, 256))
    ev = rng.exponential(size=(256, 255))
    return lambda: impl.fpp_grid(eh, ev, (0, 0), (255, 255))


def timeit(fn, repeats=5):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return median(times)


_END_TO_END = (
    "import time\n"
    "from quenchlab.env import DistSpec, sample_environment\n"
    "from quenchlab.polymer import forward_measures\n"
    "env = sample_environment(DistSpec.gaussian(), 2, 80, 1)\n"
    "t0 = time.perf_counter(); forward_measures(env, 1.0)\n"
    "print(time.perf_counter() - t0)\n"
)


def main():
    try:
        from quenchlab._kernels import _core
    except ImportError:
        print("compiled core not built; run `pip install -e . --no-build-isolation` first")
        return 1
    print(f"{'kernel':<36} {'compiled':>11} {'fallback':>11} {'speedup':>8}")
    for name, make in CASES:
        tc = timeit(make(_core))
        tp = timeit(make(_ref))
        print(f"{name:<36} {tc * 1e3:9.2f}ms {tp * 1e3:9.2f}ms {tp / tc:7.1f}x")
    tc = float(subprocess.check_output([sys.executable, "-c", _END_TO_END]))
    tp = float(
        subprocess.check_output(
            [sys.executable, "-c", _END_TO_END],
            env=dict(os.environ, QUENCHLAB_PURE_PYTHON="1"),
        )
    )
    print(f"{'polymer pass d=2 n=80 (end-to-end)':<36} {tc * 1e3:9.2f}ms {tp * 1e3:9.2f}ms {tp / tc:7.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
