# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled kernel backend.

Same function surface as ``pyref.py``; explicit loops with float64
accumulators. Selected over the pure backend at import time unless
EVSEL_PURE_KERNELS is set.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport fabs, floor, sqrt

cnp.import_array()

BACKEND_NAME = "compiled"


def mean_over_rows(rows):
    """Column means of a stacked [n, m] block, float64; n >= 1."""
    cdef cnp.ndarray arr = np.ascontiguousarray(rows, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] < 1:
        raise ValueError("mean_over_rows expects a non-empty 2-D block")
    cdef double[:, ::1] a = arr
    cdef Py_ssize_t n = a.shape[0], m = a.shape[1]
    out_arr = np.zeros(m, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t i, j
    cdef double acc
    for j in range(m):
        acc = 0.0
        for i in range(n):
            acc += a[i, j]
        out[j] = acc / n
    return out_arr


def sink_scores_layer(hv, dims):
    """Per-token max |h[dims]| / rms(h) for one layer's visual block."""
    cdef double[:, ::1] h = np.ascontiguousarray(hv, dtype=np.float64)
    cdef long long[::1] d = np.ascontiguousarray(dims, dtype=np.int64)
    cdef Py_ssize_t n_tok = h.shape[0], n_dim = h.shape[1], n_sink = d.shape[0]
    if n_sink == 0:
        raise ValueError("sink_scores_layer needs at least one dimension")
    cdef Py_ssize_t i, j
    for j in range(n_sink):
        if d[j] < 0 or d[j] >= n_dim:
            raise ValueError("sink dimension out of range")
    out_arr = np.zeros(n_tok, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef double acc, rms, peak, v
    for i in range(n_tok):
        acc = 0.0
        for j in range(n_dim):
            acc += h[i, j] * h[i, j]
        rms = sqrt(acc / n_dim)
        if rms == 0.0:
            raise ValueError("zero-norm hidden row")
        peak = 0.0
        for j in range(n_sink):
            v = fabs(h[i, d[j]])
            if v > peak:
                peak = v
        out[i] = peak / rms
    return out_arr


def percentile_linear(values, double q):
    """Linear-interpolation percentile of a 1-D sample; q in [0, 100]."""
    cdef cnp.ndarray v_arr = np.sort(np.asarray(values, dtype=np.float64))
    if v_arr.ndim != 1 or v_arr.shape[0] == 0:
        raise ValueError("percentile of empty sample")
    if not (0.0 <= q <= 100.0):
        raise ValueError("percentile rank outside [0, 100]")
    cdef double[::1] v = v_arr
    cdef Py_ssize_t n = v.shape[0]
    cdef double pos = (q / 100.0) * (n - 1)
    cdef Py_ssize_t lo = <Py_ssize_t>floor(pos)
    if lo >= n - 1:
        return float(v[n - 1])
    cdef double frac = pos - lo
    return float(v[lo] + frac * (v[lo + 1] - v[lo]))


def weighted_moments(map2d):
    """Total mass, centroid (cx, cy) and spreads (sx, sy) of a 2-D map."""
    cdef cnp.ndarray arr = np.ascontiguousarray(map2d, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError("weighted_moments expects a 2-D map")
    cdef double[:, ::1] m = arr
    cdef Py_ssize_t gh = m.shape[0], gw = m.shape[1]
    cdef Py_ssize_t r, c
    cdef double mass = 0.0
    for r in range(gh):
        for c in range(gw):
            mass += m[r, c]
    if mass <= 0.0:
        raise ValueError("relevance map has no positive mass")
    cdef double cx = 0.0, cy = 0.0, wgt
    for r in range(gh):
        for c in range(gw):
            wgt = m[r, c] / mass
            cx += wgt * c
            cy += wgt * r
    cdef double sx = 0.0, sy = 0.0
    for r in range(gh):
        for c in range(gw):
            wgt = m[r, c] / mass
            sx += wgt * (c - cx) * (c - cx)
            sy += wgt * (r - cy) * (r - cy)
    if sx < 0.0:
        sx = 0.0
    if sy < 0.0:
        sy = 0.0
    return mass, cx, cy, sqrt(sx), sqrt(sy)


def binary_closing(mask, int k=3):
    """Closing with a k x k square: dilation (outside=0), then erosion
    ignoring out-of-bounds positions. Extensive by construction."""
    if k < 1 or k % 2 == 0:
        raise ValueError("structuring element size must be odd and >= 1")
    cdef cnp.ndarray arr = np.ascontiguousarray(mask, dtype=np.uint8)
    if arr.ndim != 2:
        raise ValueError("binary_closing expects a 2-D mask")
    cdef unsigned char[:, ::1] m = arr
    cdef Py_ssize_t gh = m.shape[0], gw = m.shape[1]
    cdef int rad = k // 2
    dil_arr = np.zeros((gh, gw), dtype=np.uint8)
    out_arr = np.zeros((gh, gw), dtype=np.uint8)
    cdef unsigned char[:, ::1] dil = dil_arr
    cdef unsigned char[:, ::1] out = out_arr
    cdef Py_ssize_t r, c, rr, cc
    cdef unsigned char hit
    for r in range(gh):
        for c in range(gw):
            hit = 0
            for rr in range(r - rad, r + rad + 1):
                if hit or rr < 0 or rr >= gh:
                    continue
                for cc in range(c - rad, c + rad + 1):
                    if 0 <= cc < gw and m[rr, cc]:
                        hit = 1
                        break
            dil[r, c] = hit
    for r in range(gh):
        for c in range(gw):
            hit = 1
            for rr in range(r - rad, r + rad + 1):
                if not hit or rr < 0 or rr >= gh:
                    continue
                for cc in range(c - rad, c + rad + 1):
                    if 0 <= cc < gw and not dil[rr, cc]:
                        hit = 0
                        break
            out[r, c] = hit
    return out_arr


def largest_component_box(mask, Py_ssize_t tie_r, Py_ssize_t tie_c):
    """Inclusive cell bbox of the largest 4-connected component; ties
    prefer the component containing (tie_r, tie_c), then scan order."""
    cdef cnp.ndarray arr = np.ascontiguousarray(mask, dtype=np.uint8)
    if arr.ndim != 2:
        raise ValueError("largest_component_box expects a 2-D mask")
    cdef unsigned char[:, ::1] m = arr
    cdef Py_ssize_t gh = m.shape[0], gw = m.shape[1]
    cdef cnp.ndarray lab_arr = np.zeros((gh, gw), dtype=np.int32)
    cdef int[:, ::1] labels = lab_arr
    cdef cnp.ndarray stack_arr = np.zeros(gh * gw, dtype=np.int64)
    cdef long long[::1] stack = stack_arr
    sizes = [0]
    boxes = [None]
    cdef int next_label = 1
    cdef Py_ssize_t r0, c0, r, c, top, size
    cdef Py_ssize_t r1, r2, c1, c2
    for r0 in range(gh):
        for c0 in range(gw):
            if m[r0, c0] and labels[r0, c0] == 0:
                size = 0
                r1 = r2 = r0
                c1 = c2 = c0
                top = 0
                stack[top] = r0 * gw + c0
                top += 1
                labels[r0, c0] = next_label
                while top > 0:
                    top -= 1
                    r = stack[top] // gw
                    c = stack[top] % gw
                    size += 1
                    if r < r1: r1 = r
                    if r > r2: r2 = r
                    if c < c1: c1 = c
                    if c > c2: c2 = c
                    if r > 0 and m[r - 1, c] and labels[r - 1, c] == 0:
                        labels[r - 1, c] = next_label
                        stack[top] = (r - 1) * gw + c
                        top += 1
                    if r + 1 < gh and m[r + 1, c] and labels[r + 1, c] == 0:
                        labels[r + 1, c] = next_label
                        stack[top] = (r + 1) * gw + c
                        top += 1
                    if c > 0 and m[r, c - 1] and labels[r, c - 1] == 0:
                        labels[r, c - 1] = next_label
                        stack[top] = r * gw + c - 1
                        top += 1
                    if c + 1 < gw and m[r, c + 1] and labels[r, c + 1] == 0:
                        labels[r, c + 1] = next_label
                        stack[top] = r * gw + c + 1
                        top += 1
                sizes.append(size)
                boxes.append((r1, c1, r2, c2))
                next_label += 1
    if next_label == 1:
        raise ValueError("mask has no set cells")
    best = max(sizes[1:])
    cdef int tie_label = 0
    if 0 <= tie_r < gh and 0 <= tie_c < gw:
        tie_label = labels[tie_r, tie_c]
    if tie_label != 0 and sizes[tie_label] == best:
        return boxes[tie_label]
    cdef int lab
    for lab in range(1, next_label):
        if sizes[lab] == best:
            return boxes[lab]


def topn_inner(emb, query, Py_ssize_t n):
    """Indices and float64 inner-product scores of the n best rows,
    ranked by (-score, index)."""
    cdef cnp.ndarray e_arr = np.ascontiguousarray(emb, dtype=np.float64)
    cdef cnp.ndarray q_arr = np.ascontiguousarray(query, dtype=np.float64)
    if e_arr.ndim != 2 or q_arr.ndim != 1 or e_arr.shape[1] != q_arr.shape[0]:
        raise ValueError("embedding/query dimension mismatch")
    cdef double[:, ::1] e = e_arr
    cdef double[::1] q = q_arr
    cdef Py_ssize_t rows = e.shape[0], dim = e.shape[1]
    if n < 1 or n > rows:
        raise ValueError("n outside [1, number of rows]")
    idx_arr = np.zeros(n, dtype=np.int64)
    score_arr = np.zeros(n, dtype=np.float64)
    cdef long long[::1] top_idx = idx_arr
    cdef double[::1] top_score = score_arr
    cdef Py_ssize_t filled = 0
    cdef Py_ssize_t i, j, p, shift
    cdef double s
    for i in range(rows):
        s = 0.0
        for j in range(dim):
            s += e[i, j] * q[j]
        if filled == n and s <= top_score[n - 1]:
            continue
        # position: after all entries with score >= s (stable for ties)
        p = filled if filled < n else n - 1
        while p > 0 and top_score[p - 1] < s:
            p -= 1
        shift = filled if filled < n else n - 1
        while shift > p:
            top_score[shift] = top_score[shift - 1]
            top_idx[shift] = top_idx[shift - 1]
            shift -= 1
        top_score[p] = s
        top_idx[p] = i
        if filled < n:
            filled += 1
    return idx_arr, score_arr
