"""Brute-force reference implementations used by the validation harness.

Everything here is written with plain Python loops and the ``math``
module — no NumPy reductions, no shared helpers with the production
kernels — so the two code paths can only agree because the math agrees.
These are deliberately slow; they exist to pin down semantics, and the
test suite compares both kernel backends against them.
"""

import math


def aggregate_mean(blocks):
    """Mean over all rows of a list of [rows][m] nested lists."""
    rows = []
    for block in blocks:
        for row in block:
            rows.append([float(v) for v in row])
    if not rows:
        raise ValueError("no rows")
    m = len(rows[0])
    out = []
    for j in range(m):
        acc = 0.0
        for row in rows:
            acc += row[j]
        out.append(acc / len(rows))
    return out


def visual_relevance(per_layer_blocks):
    """Eq.-style object->visual mean: blocks of shape [K][T][NV] per layer."""
    flat = []
    for block in per_layer_blocks:
        for head in block:
            flat.append(head)
    return aggregate_mean(flat)


def textual_relevance(per_layer_rows):
    """Query->context mean: rows of shape [K][NC] per layer."""
    return aggregate_mean(per_layer_rows)


def sink_scores(hidden_per_layer, sink_dims):
    """Mean over layers of max |h[m]| / rms(h) per token.

    hidden_per_layer: list of [N][d] nested lists, one per layer.
    """
    if not sink_dims:
        raise ValueError("no sink dimensions")
    n_layers = len(hidden_per_layer)
    n_tok = len(hidden_per_layer[0])
    out = []
    for i in range(n_tok):
        acc = 0.0
        for layer in hidden_per_layer:
            row = [float(v) for v in layer[i]]
            ss = 0.0
            for v in row:
                ss += v * v
            rms = math.sqrt(ss / len(row))
            if rms == 0.0:
                raise ValueError("zero-norm hidden row")
            peak = 0.0
            for m in sink_dims:
                peak = max(peak, abs(row[m]))
            acc += peak / rms
        out.append(acc / n_layers)
    return out


def percentile(values, q):
    """Linear-interpolation percentile, the long way."""
    v = sorted(float(x) for x in values)
    if not v:
        raise ValueError("empty sample")
    if not (0.0 <= q <= 100.0):
        raise ValueError("q outside [0, 100]")
    pos = (q / 100.0) * (len(v) - 1)
    lo = math.floor(pos)
    if lo >= len(v) - 1:
        return v[-1]
    return v[lo] + (pos - lo) * (v[lo + 1] - v[lo])


def weighted_moments(map2d):
    """(mass, cx, cy, sx, sy) of a nested-list grid."""
    rows = [[float(v) for v in row] for row in map2d]
    mass = 0.0
    for row in rows:
        for v in row:
            mass += v
    if mass <= 0.0:
        raise ValueError("no positive mass")
    cx = cy = 0.0
    for r, row in enumerate(rows):
        for c, v in enumerate(row):
            cx += (v / mass) * c
            cy += (v / mass) * r
    vx = vy = 0.0
    for r, row in enumerate(rows):
        for c, v in enumerate(row):
            vx += (v / mass) * (c - cx) ** 2
            vy += (v / mass) * (r - cy) ** 2
    return mass, cx, cy, math.sqrt(max(vx, 0.0)), math.sqrt(max(vy, 0.0))


def binary_closing(mask, k=3):
    """Dilate (outside = 0) then erode (outside ignored) with k x k."""
    grid = [[1 if v else 0 for v in row] for row in mask]
    gh, gw = len(grid), len(grid[0])
    r = k // 2

    def window_any(g, row, col):
        for rr in range(row - r, row + r + 1):
            for cc in range(col - r, col + r + 1):
                if 0 <= rr < gh and 0 <= cc < gw and g[rr][cc]:
                    return 1
        return 0

    def window_all(g, row, col):
        for rr in range(row - r, row + r + 1):
            for cc in range(col - r, col + r + 1):
                if 0 <= rr < gh and 0 <= cc < gw and not g[rr][cc]:
                    return 0
        return 1

    dil = [[window_any(grid, row, col) for col in range(gw)]
           for row in range(gh)]
    return [[window_all(dil, row, col) for col in range(gw)]
            for row in range(gh)]


def components4(mask):
    """List of 4-connected components as sets of (r, c), scan order."""
    gh, gw = len(mask), len(mask[0])
    seen = [[False] * gw for _ in range(gh)]
    comps = []
    for r0 in range(gh):
        for c0 in range(gw):
            if mask[r0][c0] and not seen[r0][c0]:
                comp = set()
                stack = [(r0, c0)]
                seen[r0][c0] = True
                while stack:
                    r, c = stack.pop()
                    comp.add((r, c))
                    for rr, cc in ((r - 1, c), (r + 1, c), (r, c - 1),
                                   (r, c + 1)):
                        if 0 <= rr < gh and 0 <= cc < gw and mask[rr][cc] \
                                and not seen[rr][cc]:
                            seen[rr][cc] = True
                            stack.append((rr, cc))
                comps.append(comp)
    return comps


def largest_component_box(mask, tie_cell):
    """Inclusive (r1, c1, r2, c2) of the chosen component (see kernels)."""
    comps = components4(mask)
    if not comps:
        raise ValueError("empty mask")
    best = max(len(c) for c in comps)
    chosen = None
    for comp in comps:
        if len(comp) == best and tuple(tie_cell) in comp:
            chosen = comp
            break
    if chosen is None:
        for comp in comps:
            if len(comp) == best:
                chosen = comp
                break
    rs = [r for r, _ in chosen]
    cs = [c for _, c in chosen]
    return min(rs), min(cs), max(rs), max(cs)


def morphological_box(map2d, threshold=0.1, k=3):
    """Full morphological pipeline on a nested-list map: grid-cell box."""
    rows = [[float(v) for v in row] for row in map2d]
    peak = max(max(row) for row in rows)
    if peak <= 0:
        raise ValueError("no positive mass")
    mask = [[1 if v / peak > threshold else 0 for v in row] for row in rows]
    closed = binary_closing(mask, k)
    arg = None
    best = -1.0
    for r, row in enumerate(rows):
        for c, v in enumerate(row):
            if v > best:
                best, arg = v, (r, c)
    return largest_component_box(closed, arg)


def topn(embeddings, query, n):
    """Full sort by (-score, index) with sequential float64 dot products."""
    scored = []
    for i, row in enumerate(embeddings):
        acc = 0.0
        for a, b in zip(row, query):
            acc += float(a) * float(b)
        scored.append((-acc, i))
    scored.sort()
    return [(i, -neg) for neg, i in scored[:n]]


def rect_metrics(pred, gt, width, height):
    """IoU / coverage / precision / normalized center distance."""
    px1, py1, px2, py2 = (float(v) for v in pred)
    gx1, gy1, gx2, gy2 = (float(v) for v in gt)
    iw = min(px2, gx2) - max(px1, gx1)
    ih = min(py2, gy2) - max(py1, gy1)
    inter = (iw if iw > 0 else 0.0) * (ih if ih > 0 else 0.0)
    pa = (px2 - px1) * (py2 - py1)
    ga = (gx2 - gx1) * (gy2 - gy1)
    cdist = math.sqrt(((px1 + px2) / 2 - (gx1 + gx2) / 2) ** 2
                      + ((py1 + py2) / 2 - (gy1 + gy2) / 2) ** 2)
    return {
        "iou": inter / (pa + ga - inter),
        "coverage": inter / ga,
        "precision": inter / pa,
        "center_distance": cdist / math.sqrt(width * width + height * height),
    }
