"""Pure NumPy kernel backend.

Mirrors the compiled backend in ``_core.pyx`` function-for-function; the
package picks one of the two at import time (see ``__init__``). All
reductions accumulate in float64 regardless of input dtype. Kernels raise
plain ValueError on domain violations; callers translate to package
exceptions.
"""

from collections import deque

import numpy as np

BACKEND_NAME = "python"


def mean_over_rows(rows):
    """Column means of a stacked [n, m] block, float64; n >= 1."""
    rows = np.asarray(rows)
    if rows.ndim != 2 or rows.shape[0] < 1:
        raise ValueError("mean_over_rows expects a non-empty 2-D block")
    return rows.mean(axis=0, dtype=np.float64)


def sink_scores_layer(hv, dims):
    """Per-token max |h[dims]| / rms(h) for one layer's visual block.

    hv: [N, d] hidden rows; dims: candidate sink dimensions (>= 1).
    """
    hv = np.asarray(hv, dtype=np.float64)
    dims = np.asarray(dims, dtype=np.int64)
    if dims.size == 0:
        raise ValueError("sink_scores_layer needs at least one dimension")
    rms = np.sqrt(np.mean(hv * hv, axis=1))
    if np.any(rms == 0.0):
        raise ValueError("zero-norm hidden row")
    peak = np.abs(hv[:, dims]).max(axis=1)
    return peak / rms


def percentile_linear(values, q):
    """Linear-interpolation percentile of a 1-D sample; q in [0, 100]."""
    v = np.sort(np.asarray(values, dtype=np.float64))
    if v.ndim != 1 or v.size == 0:
        raise ValueError("percentile of empty sample")
    if not (0.0 <= q <= 100.0):
        raise ValueError("percentile rank outside [0, 100]")
    pos = (q / 100.0) * (v.size - 1)
    lo = int(np.floor(pos))
    if lo >= v.size - 1:
        return float(v[-1])
    frac = pos - lo
    return float(v[lo] + frac * (v[lo + 1] - v[lo]))


def weighted_moments(map2d):
    """Total mass, centroid (cx, cy) and spreads (sx, sy) of a 2-D map.

    Coordinates are cell-center units: column w has x = w, row h has y = h.
    Raises ValueError when the map has no positive mass.
    """
    m = np.asarray(map2d, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError("weighted_moments expects a 2-D map")
    mass = float(m.sum())
    if mass <= 0.0:
        raise ValueError("relevance map has no positive mass")
    mn = m / mass
    col_mass = mn.sum(axis=0)
    row_mass = mn.sum(axis=1)
    cols = np.arange(m.shape[1], dtype=np.float64)
    rows = np.arange(m.shape[0], dtype=np.float64)
    cx = float((col_mass * cols).sum())
    cy = float((row_mass * rows).sum())
    sx = float(np.sqrt(max((col_mass * (cols - cx) ** 2).sum(), 0.0)))
    sy = float(np.sqrt(max((row_mass * (rows - cy) ** 2).sum(), 0.0)))
    return mass, cx, cy, sx, sy


def _shifted(mask, dr, dc, fill):
    out = np.full_like(mask, fill)
    h, w = mask.shape
    src_r = slice(max(0, -dr), min(h, h - dr))
    src_c = slice(max(0, -dc), min(w, w - dc))
    dst_r = slice(max(0, dr), min(h, h + dr))
    dst_c = slice(max(0, dc), min(w, w + dc))
    out[dst_r, dst_c] = mask[src_r, src_c]
    return out


def binary_closing(mask, k=3):
    """Morphological closing with a k x k square element (k odd).

    Dilation pads with 0; erosion ignores out-of-bounds positions (pads
    with 1), so the closing is extensive: every set input cell stays set.
    """
    if k < 1 or k % 2 == 0:
        raise ValueError("structuring element size must be odd and >= 1")
    m = np.asarray(mask, dtype=np.uint8)
    if m.ndim != 2:
        raise ValueError("binary_closing expects a 2-D mask")
    r = k // 2
    dil = np.zeros_like(m)
    for dr in range(-r, r + 1):
        for dc in range(-r, r + 1):
            dil |= _shifted(m, dr, dc, 0)
    ero = np.ones_like(m)
    for dr in range(-r, r + 1):
        for dc in range(-r, r + 1):
            ero &= _shifted(dil, dr, dc, 1)
    return ero


def largest_component_box(mask, tie_r, tie_c):
    """Bounding cells (r1, c1, r2, c2), inclusive, of the largest
    4-connected component; ties prefer the component containing
    (tie_r, tie_c), then first appearance in row-major order.
    """
    m = np.asarray(mask, dtype=np.uint8)
    if m.ndim != 2:
        raise ValueError("largest_component_box expects a 2-D mask")
    h, w = m.shape
    labels = np.zeros((h, w), dtype=np.int32)
    sizes = [0]  # label 0 = background
    boxes = [None]
    next_label = 1
    for r0 in range(h):
        for c0 in range(w):
            if m[r0, c0] and not labels[r0, c0]:
                size = 0
                r1 = r2 = r0
                c1 = c2 = c0
                queue = deque([(r0, c0)])
                labels[r0, c0] = next_label
                while queue:
                    r, c = queue.popleft()
                    size += 1
                    r1, r2 = min(r1, r), max(r2, r)
                    c1, c2 = min(c1, c), max(c2, c)
                    for rr, cc in ((r - 1, c), (r + 1, c), (r, c - 1), (r, c + 1)):
                        if 0 <= rr < h and 0 <= cc < w and m[rr, cc] \
                                and not labels[rr, cc]:
                            labels[rr, cc] = next_label
                            queue.append((rr, cc))
                sizes.append(size)
                boxes.append((r1, c1, r2, c2))
                next_label += 1
    if next_label == 1:
        raise ValueError("mask has no set cells")
    best = max(sizes[1:])
    tie_label = labels[tie_r, tie_c] if (0 <= tie_r < h and 0 <= tie_c < w) else 0
    if tie_label and sizes[tie_label] == best:
        return boxes[tie_label]
    for lab in range(1, next_label):
        if sizes[lab] == best:
            return boxes[lab]
    raise AssertionError("unreachable")


def topn_inner(emb, query, n):
    """Indices and float64 inner-product scores of the n best rows.

    Ranking is by (-score, index): higher score first, lower index on ties.
    Scores accumulate in column order (not BLAS) so the rounding is a
    function of row content alone: byte-identical rows always tie exactly,
    matching the compiled kernel's sequential dot products.
    """
    emb = np.asarray(emb)
    query = np.asarray(query, dtype=np.float64)
    if emb.ndim != 2 or emb.shape[1] != query.shape[0]:
        raise ValueError("embedding/query dimension mismatch")
    if not (1 <= n <= emb.shape[0]):
        raise ValueError("n outside [1, number of rows]")
    e64 = emb.astype(np.float64, copy=False)
    scores = np.zeros(e64.shape[0], dtype=np.float64)
    for j in range(e64.shape[1]):
        scores += e64[:, j] * query[j]
    order = np.lexsort((np.arange(emb.shape[0]), -scores))
    top = order[:n].astype(np.int64)
    return top, scores[top]
