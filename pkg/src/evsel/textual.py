"""Textual evidence: query-row attention over context, sentence selection.

The attention row of the final prompt token (the position that produces
the first answer token) is averaged over the final half of the decoder
layers and all heads, restricted to the retrieved-context columns. Each
sentence scores the mean of that vector over its token span; selection is
either the single argmax sentence or everything within a fraction alpha
of the best score.
"""

from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np

from . import _kernels as kernels
from .dumpio import IntrospectionDump
from .errors import InvariantError
from .visual import _check_layers


def last_to_context(dump: IntrospectionDump, layers, query_row: Optional[int] = None
                    ) -> Dict[int, np.ndarray]:
    """Attention of the query row over context columns: {layer: [K, NC]}."""
    seg = dump.segmentation
    ca, cb = seg.context_range
    if cb - ca == 0:
        raise InvariantError("no retrieved context in this dump")
    layers = _check_layers(layers, dump.dims.n_layers, "textual")
    t = seg.last_index if query_row is None else int(query_row)
    if not (cb <= t < dump.dims.seq_len):
        raise InvariantError(
            f"query row {t} must follow the context range (>= {cb})")
    out = {}
    for layer in layers:
        sl = dump.attention.get(layer)
        if sl is None:
            raise InvariantError(f"layer {layer} has no stored attention")
        out[layer] = sl.row(t)[:, ca:cb]
    return out


def aggregate_textual(blocks: Dict[int, np.ndarray]) -> np.ndarray:
    """Mean over every (layer, head) pair -> float64 [NC]."""
    mats = [np.asarray(b) for b in blocks.values()]
    if not mats:
        raise InvariantError("no attention blocks to aggregate")
    stacked = np.concatenate([m.reshape(-1, m.shape[-1]) for m in mats], axis=0)
    return kernels.mean_over_rows(stacked)


@dataclass(frozen=True)
class TextualRelevance:
    """Context relevance with per-sentence scores and the picked set."""

    a_txt: np.ndarray                     # float64 [NC]
    sentence_scores: Tuple[float, ...]
    selected: Tuple[int, ...]
    mode: str
    alpha: Optional[float] = None


def select_sentences(a_txt, sentence_spans, mode: str = "argmax",
                     alpha: Optional[float] = None) -> TextualRelevance:
    """Score sentence spans (relative to the context vector) and select.

    mode="argmax" picks the single best sentence (earliest on exact ties);
    mode="threshold" keeps every sentence scoring >= alpha * best.
    Span order does not affect the score a given span receives.
    """
    a = np.asarray(a_txt, dtype=np.float64)
    if a.ndim != 1:
        raise InvariantError("a_txt must be a vector")
    spans = [(int(s[0]), int(s[1])) for s in sentence_spans]
    if not spans:
        raise InvariantError("no sentence spans to select from")
    scores = []
    for j, (lo, hi) in enumerate(spans):
        if not (0 <= lo < hi <= a.size):
            raise InvariantError(
                f"sentence span {j} [{lo}, {hi}) invalid for context "
                f"length {a.size}")
        scores.append(float(a[lo:hi].mean(dtype=np.float64)))

    if mode == "argmax":
        best = int(np.argmax(scores))
        selected = (best,)
    elif mode == "threshold":
        if alpha is None or not (0.0 < alpha <= 1.0):
            raise InvariantError("threshold mode needs alpha in (0, 1]")
        cut = alpha * max(scores)
        selected = tuple(j for j, s in enumerate(scores) if s >= cut)
    else:
        raise InvariantError(f"unknown selection mode {mode!r}")
    return TextualRelevance(a_txt=a, sentence_scores=tuple(scores),
                            selected=selected, mode=mode, alpha=alpha)
