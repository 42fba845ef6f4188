# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled hot kernels; see ``_ref`` for the reference semantics."""

import numpy as np

cimport numpy as cnp

cnp.import_array()

IMPL = "compiled"


def shift_kernel_sum(arr, kvals, koffs, int r_out):
    arr = np.ascontiguousarray(arr, dtype=np.float64)
    kvals = np.ascontiguousarray(kvals, dtype=np.float64)
    koffs = np.ascontiguousarray(koffs, dtype=np.int64)
    if arr.ndim == 1:
        return _sks_1d(arr, kvals, koffs, r_out)
    if arr.ndim == 2:
        return _sks_2d(arr, kvals, koffs, r_out)
    raise ValueError("only 1- and 2-dimensional boxes are supported")


def _sks_1d(const double[::1] arr, const double[::1] kvals, const long[:, ::1] koffs, int r_out):
    cdef int r_in = (arr.shape[0] - 1) // 2
    cdef int m = kvals.shape[0]
    out_np = np.zeros(2 * r_out + 1, dtype=np.float64)
    cdef double[::1] out = out_np
    cdef int j, x, o, lo, hi
    cdef double v
    for j in range(m):
        o = <int>koffs[j, 0]
        v = kvals[j]
        lo = -r_out if -r_out > o - r_in else o - r_in
        hi = r_out if r_out < o + r_in else o + r_in
        for x in range(lo, hi + 1):
            out[x + r_out] += v * arr[x - o + r_in]
    return out_np


def _sks_2d(const double[:, ::1] arr, const double[::1] kvals, const long[:, ::1] koffs, int r_out):
    cdef int r_in = (arr.shape[0] - 1) // 2
    cdef int m = kvals.shape[0]
    out_np = np.zeros((2 * r_out + 1, 2 * r_out + 1), dtype=np.float64)
    cdef double[:, ::1] out = out_np
    cdef int j, x, y, ox, oy, lox, hix, loy, hiy
    cdef double v
    for j in range(m):
        ox = <int>koffs[j, 0]
        oy = <int>koffs[j, 1]
        v = kvals[j]
        lox = -r_out if -r_out > ox - r_in else ox - r_in
        hix = r_out if r_out < ox + r_in else ox + r_in
        loy = -r_out if -r_out > oy - r_in else oy - r_in
        hiy = r_out if r_out < oy + r_in else oy + r_in
        for x in range(lox, hix + 1):
            for y in range(loy, hiy + 1):
                out[x + r_out, y + r_out] += v * arr[x - ox + r_in, y - oy + r_in]
    return out_np


def lpp_grid(x):
    x = np.ascontiguousarray(x, dtype=np.float64)
    cdef const double[:, ::1] xv = x
    cdef int nx = xv.shape[0]
    cdef int ny = xv.shape[1]
    t_np = np.empty((nx, ny), dtype=np.float64)
    cdef double[:, ::1] t = t_np
    cdef int i, j
    cdef double up, left
    t[0, 0] = 0.0
    for j in range(1, ny):
        t[0, j] = t[0, j - 1] + xv[0, j]
    for i in range(1, nx):
        t[i, 0] = t[i - 1, 0] + xv[i, 0]
        for j in range(1, ny):
            up = t[i - 1, j]
            left = t[i, j - 1]
            t[i, j] = xv[i, j] + (up if up > left else left)
    return t_np


def fpp_grid(eh, ev, src, dst):
    eh = np.ascontiguousarray(eh, dtype=np.float64)
    ev = np.ascontiguousarray(ev, dtype=np.float64)
    cdef const double[:, ::1] ehv = eh
    cdef const double[:, ::1] evv = ev
    cdef int nx = evv.shape[0]
    cdef int ny = ehv.shape[1]
    cdef int n = nx * ny
    dist_np = np.full(n, np.inf, dtype=np.float64)
    done_np = np.zeros(n, dtype=np.uint8)
    cdef double[::1] dist = dist_np
    cdef unsigned char[::1] done = done_np
    # Lazy-deletion binary heap over (key, node) pairs.
    heap_key_np = np.empty(4 * n + 16, dtype=np.float64)
    heap_node_np = np.empty(4 * n + 16, dtype=np.int64)
    cdef double[::1] hkey = heap_key_np
    cdef long[::1] hnode = heap_node_np
    cdef long hsize = 0, hcap = hkey.shape[0]
    cdef int a, b, v, u, target
    cdef double dv, nd
    cdef long i, parent, child

    v = <int>src[0] * ny + <int>src[1]
    target = <int>dst[0] * ny + <int>dst[1]
    dist[v] = 0.0
    hkey[0] = 0.0
    hnode[0] = v
    hsize = 1
    while hsize > 0:
        dv = hkey[0]
        v = <int>hnode[0]
        hsize -= 1
        hkey[0] = hkey[hsize]
        hnode[0] = hnode[hsize]
        i = 0
        while True:
            child = 2 * i + 1
            if child >= hsize:
                break
            if child + 1 < hsize and hkey[child + 1] < hkey[child]:
                child += 1
            if hkey[child] < hkey[i]:
                hkey[i], hkey[child] = hkey[child], hkey[i]
                hnode[i], hnode[child] = hnode[child], hnode[i]
                i = child
            else:
                break
        if done[v]:
            continue
        done[v] = 1
        if v == target:
            break
        a = v // ny
        b = v - a * ny
        for u in range(4):
            if u == 0:
                if a == 0:
                    continue
                nd = dv + ehv[a - 1, b]
                i = v - ny
            elif u == 1:
                if a == nx - 1:
                    continue
                nd = dv + ehv[a, b]
                i = v + ny
            elif u == 2:
                if b == 0:
                    continue
                nd = dv + evv[a, b - 1]
                i = v - 1
            else:
                if b == ny - 1:
                    continue
                nd = dv + evv[a, b]
                i = v + 1
            if done[i] or nd >= dist[i]:
                continue
            dist[i] = nd
            if hsize >= hcap:
                # grow the heap arrays (rare: lazy deletion bound exceeded)
                heap_key_np = np.resize(heap_key_np, 2 * hcap)
                heap_node_np = np.resize(heap_node_np, 2 * hcap)
                hkey = heap_key_np
                hnode = heap_node_np
                hcap = hkey.shape[0]
            child = hsize
            hkey[child] = nd
            hnode[child] = i
            hsize += 1
            while child > 0:
                parent = (child - 1) // 2
                if hkey[parent] > hkey[child]:
                    hkey[parent], hkey[child] = hkey[child], hkey[parent]
                    hnode[parent], hnode[child] = hnode[child], hnode[parent]
                    child = parent
                else:
                    break
    return dist_np.reshape(nx, ny), done_np.reshape(nx, ny).astype(bool)
