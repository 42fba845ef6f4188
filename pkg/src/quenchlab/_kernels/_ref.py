"""Pure-numpy kernels: the fallback used when the compiled core is absent.

Same contracts as ``_core``:

* ``shift_kernel_sum`` — out[x] = Σ_j kvals[j] · arr[x − koffs[j]] on centered
  boxes, zero outside the input box.
* ``lpp_grid`` — corner-growth passage times T[i,j] = X[i,j] + max(T[i−1,j],
  T[i,j−1]) with the source's own weight excluded (T[0,0] = 0).
* ``fpp_grid`` — Dijkstra on the grid graph with edge arrays, early exit at
  the target; returns (distances, finalized mask).
"""

from __future__ import annotations

import heapq

import numpy as np

IMPL = "python"


def shift_kernel_sum(arr: np.ndarray, kvals: np.ndarray, koffs: np.ndarray, r_out: int) -> np.ndarray:
    d = arr.ndim
    r_in = (arr.shape[0] - 1) // 2
    out = np.zeros((2 * r_out + 1,) * d, dtype=np.float64)
    for val, off in zip(kvals, koffs):
        src, dst = [], []
        ok = True
        for ax in range(d):
            o = int(off[ax])
            # out index x ∈ [−r_out, r_out] with x − o ∈ [−r_in, r_in]
            lo = max(-r_out, o - r_in)
            hi = min(r_out, o + r_in)
            if lo > hi:
                ok = False
                break
            dst.append(slice(lo + r_out, hi + r_out + 1))
            src.append(slice(lo - o + r_in, hi - o + r_in + 1))
        if ok:
            out[tuple(dst)] += val * arr[tuple(src)]
    return out


def lpp_grid(x: np.ndarray) -> np.ndarray:
    # Row recursion via prefix sums: T[i,j] = S[j] + max_{k<=j} (T[i-1,k] - S[k-1]),
    # S = cumsum of row i.  This vectorizes the left-to-right max-plus scan.
    nx, ny = x.shape
    t = np.empty_like(x, dtype=np.float64)
    t[0, 0] = 0.0
    if ny > 1:
        t[0, 1:] = np.cumsum(x[0, 1:])
    for i in range(1, nx):
        s = np.cumsum(x[i])
        shifted = np.empty(ny)
        shifted[0] = 0.0
        shifted[1:] = s[:-1]
        t[i] = s + np.maximum.accumulate(t[i - 1] - shifted)
    return t


def fpp_grid(eh: np.ndarray, ev: np.ndarray, src: tuple, dst: tuple):
    nx, ny = ev.shape[0], eh.shape[1]
    dist = np.full((nx, ny), np.inf)
    done = np.zeros((nx, ny), dtype=bool)
    dist[src] = 0.0
    heap = [(0.0, int(src[0]), int(src[1]))]
    while heap:
        dv, a, b = heapq.heappop(heap)
        if done[a, b]:
            continue
        done[a, b] = True
        if (a, b) == tuple(dst):
            break
        if a > 0 and not done[a - 1, b]:
            nd = dv + eh[a - 1, b]
            if nd < dist[a - 1, b]:
                dist[a - 1, b] = nd
                heapq.heappush(heap, (nd, a - 1, b))
        if a < nx - 1 and not done[a + 1, b]:
            nd = dv + eh[a, b]
            if nd < dist[a + 1, b]:
                dist[a + 1, b] = nd
                heapq.heappush(heap, (nd, a + 1, b))
        if b > 0 and not done[a, b - 1]:
            nd = dv + ev[a, b - 1]
            if nd < dist[a, b - 1]:
                dist[a, b - 1] = nd
                heapq.heappush(heap, (nd, a, b - 1))
        if b < ny - 1 and not done[a, b + 1]:
            nd = dv + ev[a, b]
            if nd < dist[a, b + 1]:
                dist[a, b + 1] = nd
                heapq.heappush(heap, (nd, a, b + 1))
    return dist, done
