"""Synthetic introspection dumps with planted, recoverable structure.

Two generators share the counter-based PRNG so outputs are reproducible
across platforms:

* :func:`generate` plants known structure from a :class:`SynthSpec` —
  attention peaks at chosen grid cells, sink tokens whose hidden rows
  spike on chosen dimensions, and a dominant evidence sentence — and
  returns the dump together with the ground-truth record the validation
  harness checks against.
* :func:`random_dump` draws everything uniformly (within invariants) for
  round-trip and oracle-equivalence testing.

Planted construction notes (what makes recovery exact, not just likely):
non-sink visual tokens share one baseline hidden row per layer, so their
sink scores are all equal and the 25th percentile lands on that shared
value; sink rows spike hard enough that their score strictly exceeds it.
Evidence-sentence tokens get exactly twice the per-token attention weight
of other context tokens, so the evidence sentence wins the mean-score
argmax no matter how sentence lengths are drawn.
"""

import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .dumpio import (AttentionSlice, ContextInfo, HiddenSlice, ImageMeta,
                     IntrospectionDump, ModelDims, QuestionInfo,
                     TokenSegmentation)
from .errors import InputError, InvariantError
from .prng import Stream

_FILLERS = ("what", "is", "the", "of", "this", "in")
_CONTENT_WORDS = ("crimson", "lighthouse")


@dataclass(frozen=True)
class SynthSpec:
    """Recipe for one planted dump."""

    dims: ModelDims
    peak_cells: Tuple[Tuple[int, int, float], ...]  # (row, col, mass)
    sink_tokens: Tuple[int, ...] = ()
    sink_dims: Tuple[int, ...] = ()
    sink_magnitude: float = 30.0
    evidence_sentence: Optional[int] = 0
    seed: int = 0
    n_question_tokens: int = 4
    sentence_token_counts: Optional[Tuple[int, ...]] = None


def _derive_layout(spec: SynthSpec):
    """Token ranges implied by the spec; raises on infeasible shapes."""
    d = spec.dims
    nv = d.n_visual
    nt = spec.n_question_tokens
    if nt < 1:
        raise InvariantError("need at least one question token")
    nc = d.seq_len - nv - nt - 2  # two tail rows: query row and bos
    if nc < 0:
        raise InvariantError(
            f"seq_len {d.seq_len} too small for {nv} visual + {nt} question "
            "tokens plus query/bos rows")
    if spec.sentence_token_counts is not None:
        counts = tuple(int(c) for c in spec.sentence_token_counts)
        if any(c < 1 for c in counts) or sum(counts) != nc:
            raise InvariantError(
                f"sentence_token_counts must be positive and sum to {nc}")
    elif nc == 0:
        counts = ()
    else:
        k = min(3, nc)
        base, extra = divmod(nc, k)
        counts = tuple(base + (1 if j < extra else 0) for j in range(k))
    return nv, nt, nc, counts


def validate_spec(spec: SynthSpec):
    d = spec.dims
    nv, nt, nc, counts = _derive_layout(spec)

    if not spec.peak_cells:
        raise InvariantError("at least one peak cell required")
    seen = set()
    total = 0.0
    for h, w, mass in spec.peak_cells:
        if not (0 <= h < d.grid_h and 0 <= w < d.grid_w):
            raise InvariantError(f"peak cell ({h}, {w}) outside grid")
        if (h, w) in seen:
            raise InvariantError(f"duplicate peak cell ({h}, {w})")
        seen.add((h, w))
        if mass <= 0:
            raise InvariantError("peak masses must be positive")
        total += mass
    if total > 1.0:
        raise InvariantError(f"peak masses sum to {total} > 1")

    sinks = spec.sink_tokens
    if list(sinks) != sorted(set(sinks)):
        raise InvariantError("sink_tokens must be sorted and unique")
    if sinks and (sinks[0] < 0 or sinks[-1] >= nv):
        raise InvariantError("sink_tokens outside visual range")
    for h, w, _ in spec.peak_cells:
        if h * d.grid_w + w in sinks:
            raise InvariantError(
                f"peak cell ({h}, {w}) coincides with a sink token")
    sdims = spec.sink_dims
    if list(sdims) != sorted(set(sdims)):
        raise InvariantError("sink_dims must be sorted and unique")
    if sdims and (sdims[0] < 0 or sdims[-1] >= d.hidden):
        raise InvariantError("sink_dims outside hidden size")
    if sinks:
        if not sdims:
            raise InvariantError("sink_tokens planted without sink_dims")
        # Separation guarantee: spiked rows must outscore the shared
        # baseline strictly, and the 25th percentile must fall on the
        # baseline population.
        if spec.sink_magnitude < 20:
            raise InvariantError("sink_magnitude must be >= 20")
        if d.hidden < 8 * len(sdims):
            raise InvariantError(
                "hidden size must be >= 8 * len(sink_dims) for separable "
                "sink scores")
        hi = math.floor(0.25 * (nv - 1)) + 1
        if len(sinks) > nv - 1 - hi:
            raise InvariantError(
                f"too many sink tokens ({len(sinks)}) for grid of {nv}: "
                "the 25th percentile would land inside the sink population")

    if spec.evidence_sentence is not None:
        if nc == 0:
            raise InvariantError("evidence sentence requested without context")
        if not (0 <= spec.evidence_sentence < len(counts)):
            raise InvariantError(
                f"evidence_sentence {spec.evidence_sentence} out of range "
                f"for {len(counts)} sentences")
    return nv, nt, nc, counts


def _question_block(nt, start):
    n_obj = 1 if nt < 4 else 2
    words = [_FILLERS[i % len(_FILLERS)] for i in range(nt - n_obj)]
    words += list(_CONTENT_WORDS[-n_obj:])
    text = " ".join(words)
    offsets = []
    pos = 0
    for w in words:
        offsets.append((pos, pos + len(w)))
        pos += len(w) + 1
    object_indices = tuple(range(start + nt - n_obj, start + nt))
    return QuestionInfo(text=text, token_offsets=tuple(offsets)), object_indices


def _context_block(counts):
    pieces = []
    spans = []
    pos = 0
    for j in range(len(counts)):
        s = f"Planted fact number {j} appears in this sentence."
        if j:
            pos += 1  # joining space
        pieces.append(s)
        spans.append((pos, pos + len(s)))
        pos += len(s)
    return ContextInfo(text=" ".join(pieces), sentence_char_spans=tuple(spans))


def _attention_rows(spec, nv, nt, nc, counts, seg, rows):
    """Row-sliced attention values, identical across heads and layers."""
    d = spec.dims
    S = d.seq_len
    t = seg.last_index
    values = np.zeros((len(rows), S), dtype=np.float64)
    row_pos = {tok: i for i, tok in enumerate(rows)}

    # Object rows: planted peaks plus a uniform floor over the rest of the
    # visual grid (leftover goes to the row's own column when the peaks
    # cover the whole grid).
    peak_total = sum(m for _, _, m in spec.peak_cells)
    n_rest = nv - len(spec.peak_cells)
    for tok in seg.object_indices:
        r = values[row_pos[tok]]
        if n_rest:
            r[:nv] = (1.0 - peak_total) / n_rest
        else:
            r[tok] = 1.0 - peak_total
        for h, w, mass in spec.peak_cells:
            r[h * d.grid_w + w] = mass

    # Query row: evidence tokens get exactly twice the weight of other
    # context tokens; a 0.05 remainder sits on the row's own column.
    r = values[row_pos[t]]
    if nc:
        ca, _ = seg.context_range
        ev = spec.evidence_sentence
        weights = np.ones(nc, dtype=np.float64)
        if ev is not None:
            lo = sum(counts[:ev])
            weights[lo:lo + counts[ev]] = 2.0
        weights *= 0.95 / weights.sum()
        r[ca:ca + nc] = weights
        r[t] = 0.05
    else:
        r[t] = 1.0
    return values


def generate(spec: SynthSpec):
    """Build one planted dump; returns (dump, ground_truth_dict)."""
    nv, nt, nc, counts = validate_spec(spec)
    d = spec.dims
    S = d.seq_len
    ca = nv + nt
    t = ca + nc
    bos = t + 1

    spans = []
    lo = ca
    for c in counts:
        spans.append((lo, lo + c))
        lo += c
    question, object_indices = _question_block(nt, nv)
    seg = TokenSegmentation(
        visual_range=(0, nv), question_range=(nv, ca),
        context_range=(ca, t), sentence_spans=tuple(spans),
        last_index=t, object_indices=object_indices, bos_index=bos)

    rows = sorted(set(object_indices) | {t})
    row_values = _attention_rows(spec, nv, nt, nc, counts, seg, rows)

    rng = Stream(spec.seed)
    attention = {}
    hidden = {}
    hid_rows = list(range(nv)) + [bos]
    sink_set = set(spec.sink_tokens)
    for layer in range(d.n_layers):
        attention[layer] = AttentionSlice(
            layer=layer,
            row_indices=np.asarray(rows, dtype=np.int64),
            values=np.broadcast_to(
                row_values.astype(np.float32),
                (d.n_heads, len(rows), S)).copy())
        baseline = (0.5 + 0.5 * rng.substream(101, layer).floats(d.hidden)
                    ).astype(np.float32)
        hv = np.tile(baseline, (len(hid_rows), 1))
        spike = baseline.copy()
        for m in spec.sink_dims:
            spike[m] = np.float32(spec.sink_magnitude)
        for i, tok in enumerate(hid_rows):
            if tok in sink_set or tok == bos:
                hv[i] = spike
        hidden[layer] = HiddenSlice(
            layer=layer,
            row_indices=np.asarray(hid_rows, dtype=np.int64),
            values=hv)

    image = ImageMeta(width_px=64 * d.grid_w, height_px=64 * d.grid_h)
    dump = IntrospectionDump(
        dims=d, segmentation=seg, image=image, attention=attention,
        hidden=hidden, sink_dims=tuple(spec.sink_dims), question=question,
        context=_context_block(counts) if counts else None)

    best = max(spec.peak_cells, key=lambda p: p[2])
    truth = {
        "seed": spec.seed,
        "peak_cells": [[int(h), int(w), float(m)]
                       for h, w, m in spec.peak_cells],
        "peak_argmax": [int(best[0]), int(best[1])],
        "sink_tokens": [int(s) for s in spec.sink_tokens],
        "sink_dims": [int(m) for m in spec.sink_dims],
        "evidence_sentence": spec.evidence_sentence,
        "object_indices": [int(i) for i in object_indices],
    }
    return dump, truth


def spec_from_json(obj) -> SynthSpec:
    """Parse the JSON form used by the synth CLI command."""
    if not isinstance(obj, dict):
        raise InputError("synth spec must be a JSON object")
    try:
        dm = obj["dims"]
        dims = ModelDims(n_layers=int(dm["n_layers"]),
                         n_heads=int(dm["n_heads"]),
                         seq_len=int(dm["seq_len"]),
                         hidden=int(dm["hidden"]),
                         grid_h=int(dm["grid_h"]),
                         grid_w=int(dm["grid_w"]))
        peaks = tuple((int(p[0]), int(p[1]), float(p[2]))
                      for p in obj["peak_cells"])
        stc = obj.get("sentence_token_counts")
        return SynthSpec(
            dims=dims, peak_cells=peaks,
            sink_tokens=tuple(int(s) for s in obj.get("sink_tokens", [])),
            sink_dims=tuple(int(s) for s in obj.get("sink_dims", [])),
            sink_magnitude=float(obj.get("sink_magnitude", 30.0)),
            evidence_sentence=(None if obj.get("evidence_sentence") is None
                               else int(obj["evidence_sentence"])),
            seed=int(obj.get("seed", 0)),
            n_question_tokens=int(obj.get("n_question_tokens", 4)),
            sentence_token_counts=(None if stc is None
                                   else tuple(int(c) for c in stc)))
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        raise InputError(f"malformed synth spec: {exc}") from exc


# ---------------------------------------------------------------------------
# unplanted random dumps


def random_dump(seed: int, with_text: bool = True) -> IntrospectionDump:
    """A fully random (but invariant-respecting) small dump."""
    rng = Stream(seed)
    gh = rng.integers(1, 5)
    gw = rng.integers(1, 5)
    nv = gh * gw
    nt = rng.integers(1, 6)
    nc = rng.integers(2, 13)
    n_layers = rng.integers(1, 5)
    n_heads = rng.integers(1, 5)
    hidden_d = rng.integers(4, 33)
    S = nv + nt + nc + 2
    dims = ModelDims(n_layers=n_layers, n_heads=n_heads, seq_len=S,
                     hidden=hidden_d, grid_h=gh, grid_w=gw)

    ca = nv + nt
    t = ca + nc
    bos = t + 1
    n_sent = rng.integers(1, min(4, nc) + 1)
    cuts = sorted(rng.choice_without_replacement(nc - 1, n_sent - 1)) \
        if n_sent > 1 else []
    bounds = [0] + [c + 1 for c in cuts] + [nc]
    spans = tuple((ca + a, ca + b) for a, b in zip(bounds, bounds[1:]))

    n_obj = rng.integers(1, min(3, nt) + 1)
    obj = tuple(sorted(nv + i
                       for i in rng.choice_without_replacement(nt, n_obj)))
    seg = TokenSegmentation(visual_range=(0, nv), question_range=(nv, ca),
                            context_range=(ca, t), sentence_spans=spans,
                            last_index=t, object_indices=obj, bos_index=bos)

    rows = sorted(set(obj) | {t})
    attention = {}
    hidden = {}
    for layer in range(n_layers):
        a = rng.substream(7, layer).floats(n_heads, len(rows), S) + 1e-3
        scale = 0.9 + 0.1 * rng.substream(8, layer).floats(n_heads, len(rows))
        a = a / a.sum(axis=-1, keepdims=True) * scale[..., None]
        attention[layer] = AttentionSlice(
            layer=layer, row_indices=np.asarray(rows, dtype=np.int64),
            values=a.astype(np.float32))
        hr = list(range(nv)) + [bos]
        u = rng.substream(9, layer).floats(len(hr), hidden_d)
        sign = np.where(rng.substream(10, layer).floats(len(hr), hidden_d)
                        < 0.5, -1.0, 1.0)
        hidden[layer] = HiddenSlice(
            layer=layer, row_indices=np.asarray(hr, dtype=np.int64),
            values=((0.25 + 1.5 * u) * sign).astype(np.float32))

    width = 64 + rng.integers(0, 961)
    height = 64 + rng.integers(0, 961)
    question = context = None
    if with_text:
        question, _ = _question_block(nt, nv)
        counts = tuple(b - a for a, b in zip(bounds, bounds[1:]))
        context = _context_block(counts)
    return IntrospectionDump(
        dims=dims, segmentation=seg,
        image=ImageMeta(width_px=width, height_px=height),
        attention=attention, hidden=hidden, sink_dims=None,
        question=question, context=context)
