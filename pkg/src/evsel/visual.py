"""Visual evidence: object-to-visual attention, sink filtering, boxes.

The visual side of the pipeline works on one dump:

1. pull the attention rows of the object tokens over the visual tokens
   across an intermediate band of layers and average over (layer, head,
   object token) — the raw relevance vector ``a_vis``;
2. score every visual token for "sink-ness" (hidden-state mass parked on a
   few special dimensions, measured as max |h[sink dims]| / rms(h)) and
   zero out tokens scoring above the q-th percentile;
3. turn the surviving relevance grid into a bounding box with one of three
   strategies (weighted centroid +- beta*sigma, min-max extent of the
   support, or thresholding + 3x3 morphological closing + largest
   4-connected component).

Grid coordinates put cell centers at integer positions: column w spans
[w - 0.5, w + 0.5]. Pixel coordinates map x -> (x + 0.5) * width / grid_w.
"""

from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np

from . import _kernels as kernels
from .dumpio import ImageMeta, IntrospectionDump
from .errors import InvariantError

STRATEGIES = ("weighted_centroid", "min_max", "morphological")


@dataclass(frozen=True)
class LayerRanges:
    """Layer index sets used by the three analyses."""

    l_vis: Tuple[int, ...]
    l_txt: Tuple[int, ...]
    l_sink: Tuple[int, ...]


def default_layer_ranges(n_layers: int) -> LayerRanges:
    """Intermediate band for visual/sink work, final half for textual.

    The band is [floor(L/4), floor(3L/4)), widened to at least one layer
    so models with fewer than four layers still get a usable default.
    """
    if n_layers < 1:
        raise InvariantError("n_layers must be >= 1")
    lo = n_layers // 4
    hi = max(3 * n_layers // 4, lo + 1)
    mid = tuple(range(lo, hi))
    txt = tuple(range(n_layers // 2, n_layers))
    return LayerRanges(l_vis=mid, l_txt=txt, l_sink=mid)


def _check_layers(layers, n_layers, what):
    layers = tuple(int(l) for l in layers)
    if not layers:
        raise InvariantError(f"{what} layer set is empty")
    for l in layers:
        if not (0 <= l < n_layers):
            raise InvariantError(f"{what} layer {l} outside [0, {n_layers})")
    return layers


def object_to_visual(dump: IntrospectionDump, object_tokens, layers
                     ) -> Dict[int, np.ndarray]:
    """Attention blocks A[k, t_obj, visual] per layer: {layer: [K, T, NV]}."""
    seg = dump.segmentation
    layers = _check_layers(layers, dump.dims.n_layers, "visual")
    object_tokens = tuple(int(t) for t in object_tokens)
    if not object_tokens:
        raise InvariantError("empty object token set")
    qa, qb = seg.question_range
    for t in object_tokens:
        if not (qa <= t < qb):
            raise InvariantError(f"object token {t} outside question range")
    va, vb = seg.visual_range
    out = {}
    for layer in layers:
        sl = dump.attention.get(layer)
        if sl is None:
            raise InvariantError(f"layer {layer} has no stored attention")
        block = np.stack([sl.row(t) for t in object_tokens], axis=1)
        out[layer] = block[:, :, va:vb]
    return out


def aggregate_visual(blocks: Dict[int, np.ndarray]) -> np.ndarray:
    """Mean over every (layer, head, object-token) triple -> float64 [NV]."""
    mats = [np.asarray(b) for b in blocks.values()]
    if not mats:
        raise InvariantError("no attention blocks to aggregate")
    stacked = np.concatenate([m.reshape(-1, m.shape[-1]) for m in mats], axis=0)
    return kernels.mean_over_rows(stacked)


def detect_sink_dims(dump: IntrospectionDump, layers, kappa: float = 5.0
                     ) -> Tuple[int, ...]:
    """Hidden dimensions spiking on the sink-reference token.

    A dimension is flagged in one layer when |h_bos[m]| > kappa * rms(h_bos);
    it is kept when flagged in a strict majority of the layers.
    """
    if kappa <= 0:
        raise InvariantError("kappa must be positive")
    seg = dump.segmentation
    if seg.bos_index is None:
        raise InvariantError("bos_index required for sink-dimension detection")
    layers = _check_layers(layers, dump.dims.n_layers, "sink")
    votes = np.zeros(dump.dims.hidden, dtype=np.int64)
    for layer in layers:
        sl = dump.hidden.get(layer)
        if sl is None:
            raise InvariantError(f"layer {layer} has no stored hidden states")
        h = sl.row(seg.bos_index).astype(np.float64)
        rms = float(np.sqrt(np.mean(h * h)))
        if rms == 0.0:
            raise InvariantError(
                f"zero-norm sink-reference row in layer {layer}")
        votes += (np.abs(h) > kappa * rms).astype(np.int64)
    keep = np.nonzero(votes * 2 > len(layers))[0]
    return tuple(int(m) for m in keep)


def sink_scores(dump: IntrospectionDump, sink_dims, layers) -> np.ndarray:
    """Mean over layers of max |h[sink dims]| / rms(h) per visual token."""
    sink_dims = tuple(int(m) for m in sink_dims)
    if not sink_dims:
        raise InvariantError("empty sink dimension set")
    for m in sink_dims:
        if not (0 <= m < dump.dims.hidden):
            raise InvariantError(f"sink dimension {m} outside hidden size")
    layers = _check_layers(layers, dump.dims.n_layers, "sink")
    va, vb = dump.segmentation.visual_range
    visual = list(range(va, vb))
    total = np.zeros(len(visual), dtype=np.float64)
    for layer in layers:
        sl = dump.hidden.get(layer)
        if sl is None:
            raise InvariantError(f"layer {layer} has no stored hidden states")
        hv = sl.rows(visual)
        try:
            total += kernels.sink_scores_layer(hv, np.asarray(sink_dims,
                                                              dtype=np.int64))
        except ValueError as exc:
            raise InvariantError(f"layer {layer}: {exc}") from exc
    return total / len(layers)


def sink_mask(s_sink, q: float = 25.0):
    """Threshold tau (q-th percentile) and the strict-above mask."""
    s = np.asarray(s_sink, dtype=np.float64)
    if s.ndim != 1 or s.size == 0:
        raise InvariantError("sink scores must be a non-empty vector")
    try:
        tau = kernels.percentile_linear(s, float(q))
    except ValueError as exc:
        raise InvariantError(str(exc)) from exc
    return tau, s > tau


@dataclass(frozen=True)
class VisualRelevance:
    """Sink-filtered relevance: flat vector plus its grid view."""

    a_vis: np.ndarray  # float64 [NV]
    grid: np.ndarray   # float64 [grid_h, grid_w]


def filter_sinks(a_vis, s_sink, grid_hw, q: float = 25.0) -> VisualRelevance:
    """Zero relevance exactly where the sink score exceeds its percentile."""
    a = np.asarray(a_vis, dtype=np.float64)
    s = np.asarray(s_sink, dtype=np.float64)
    gh, gw = int(grid_hw[0]), int(grid_hw[1])
    if a.shape != s.shape or a.ndim != 1:
        raise InvariantError("relevance and sink scores must match in length")
    if a.size != gh * gw:
        raise InvariantError(
            f"relevance length {a.size} != grid {gh}x{gw}")
    _, mask = sink_mask(s, q)
    filtered = np.where(mask, 0.0, a)
    return VisualRelevance(a_vis=filtered, grid=filtered.reshape(gh, gw))


# ---------------------------------------------------------------------------
# bounding boxes


@dataclass(frozen=True)
class BoxResult:
    """A box in grid-center coordinates and its pixel-space image."""

    strategy: str
    grid_box: Tuple[float, float, float, float]   # x1, y1, x2, y2
    pixel_box: Tuple[float, float, float, float]


def _axis_finish(lo, hi, cells):
    """Clamp to the grid, then enforce a one-cell minimum extent."""
    lo = max(lo, -0.5)
    hi = min(hi, cells - 0.5)
    if hi - lo < 1.0:
        center = 0.5 * (lo + hi)
        lo, hi = center - 0.5, center + 0.5
        if lo < -0.5:
            hi += -0.5 - lo
            lo = -0.5
        if hi > cells - 0.5:
            lo -= hi - (cells - 0.5)
            hi = cells - 0.5
    return lo, hi


def _finish_box(strategy, x1, y1, x2, y2, grid_hw, image: ImageMeta):
    gh, gw = grid_hw
    x1, x2 = _axis_finish(x1, x2, gw)
    y1, y2 = _axis_finish(y1, y2, gh)
    sx = image.width_px / gw
    sy = image.height_px / gh
    px = ((x1 + 0.5) * sx, (y1 + 0.5) * sy, (x2 + 0.5) * sx, (y2 + 0.5) * sy)
    return BoxResult(strategy=strategy, grid_box=(x1, y1, x2, y2),
                     pixel_box=px)


def _as_grid(map2d):
    m = np.asarray(map2d, dtype=np.float64)
    if m.ndim != 2:
        raise InvariantError("relevance map must be 2-D")
    if not np.all(np.isfinite(m)):
        raise InvariantError("non-finite relevance map")
    if m.size and m.min() < 0:
        raise InvariantError("negative relevance values")
    return m


def bbox_weighted_centroid(map2d, image: ImageMeta, beta: float = 2.0
                           ) -> BoxResult:
    """Centroid +- beta * per-axis standard deviation of the mass."""
    m = _as_grid(map2d)
    if beta <= 0:
        raise InvariantError("beta must be positive")
    try:
        _, cx, cy, sx, sy = kernels.weighted_moments(m)
    except ValueError as exc:
        raise InvariantError(str(exc)) from exc
    return _finish_box("weighted_centroid",
                       cx - beta * sx, cy - beta * sy,
                       cx + beta * sx, cy + beta * sy,
                       m.shape, image)


def bbox_min_max(map2d, image: ImageMeta) -> BoxResult:
    """Tight cell-aligned box around every strictly positive cell."""
    m = _as_grid(map2d)
    rows, cols = np.nonzero(m > 0)
    if rows.size == 0:
        raise InvariantError("relevance map has no positive mass")
    return _finish_box("min_max",
                       cols.min() - 0.5, rows.min() - 0.5,
                       cols.max() + 0.5, rows.max() + 0.5,
                       m.shape, image)


def bbox_morphological(map2d, image: ImageMeta, threshold: float = 0.1,
                       kernel: int = 3) -> BoxResult:
    """Threshold at ``threshold * max``, close with a kernel x kernel
    square, and box the largest 4-connected component (ties go to the
    component holding the global argmax cell)."""
    m = _as_grid(map2d)
    peak = float(m.max()) if m.size else 0.0
    if peak <= 0:
        raise InvariantError("relevance map has no positive mass")
    if not (0 <= threshold < 1):
        raise InvariantError("threshold must lie in [0, 1)")
    mask = (m / peak > threshold).astype(np.uint8)
    try:
        closed = kernels.binary_closing(mask, kernel)
        argmax_flat = int(np.argmax(m))
        tie_r, tie_c = divmod(argmax_flat, m.shape[1])
        r1, c1, r2, c2 = kernels.largest_component_box(closed, tie_r, tie_c)
    except ValueError as exc:
        raise InvariantError(str(exc)) from exc
    return _finish_box("morphological",
                       c1 - 0.5, r1 - 0.5, c2 + 0.5, r2 + 0.5,
                       m.shape, image)


_BBOX_FNS = {
    "weighted_centroid": bbox_weighted_centroid,
    "min_max": bbox_min_max,
    "morphological": bbox_morphological,
}


def bbox(map2d, image: ImageMeta, strategy: str = "weighted_centroid",
         beta: float = 2.0, threshold: float = 0.1, kernel: int = 3
         ) -> BoxResult:
    """Dispatch to one of the three strategies by name."""
    if strategy not in _BBOX_FNS:
        raise InvariantError(
            f"unknown bbox strategy {strategy!r}; expected one of {STRATEGIES}")
    if strategy == "weighted_centroid":
        return bbox_weighted_centroid(map2d, image, beta=beta)
    if strategy == "morphological":
        return bbox_morphological(map2d, image, threshold=threshold,
                                  kernel=kernel)
    return bbox_min_max(map2d, image)
