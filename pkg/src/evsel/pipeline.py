"""End-to-end evidence selection over one dump.

Composes the analysis stages in order: resolve layer ranges, locate the
object tokens (explicit indices or question heuristic), aggregate
object-to-visual attention, filter attention sinks, fit the bounding box,
aggregate query-to-context attention, select sentences, and emit a flat
report dictionary ready for canonical JSON serialization. A second entry
point builds the marker-highlighted prompt from the same run.
"""

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .dumpio import IntrospectionDump
from .errors import InvariantError
from .focus import focus_from_question
from .prompting import DEFAULT_MARKERS, MarkedPrompt, MarkerSet, build_prompt
from .textual import aggregate_textual, last_to_context, select_sentences
from .visual import (LayerRanges, aggregate_visual, bbox, default_layer_ranges,
                     detect_sink_dims, filter_sinks, object_to_visual,
                     sink_mask, sink_scores, STRATEGIES)

REPORT_SCHEMA = "evsel.report/1"


@dataclass(frozen=True)
class RunConfig:
    """Tunable parameters of one selection run (defaults as documented)."""

    q: float = 25.0
    beta: float = 2.0
    kappa: float = 5.0
    strategy: str = "weighted_centroid"
    alpha_mode: str = "argmax"
    alpha: Optional[float] = None
    granularity: str = "sentence"
    include_full_image: bool = False
    n_retrieve: int = 3
    bbox_threshold: float = 0.1
    bbox_kernel: int = 3
    l_vis: Optional[Tuple[int, ...]] = None
    l_txt: Optional[Tuple[int, ...]] = None
    l_sink: Optional[Tuple[int, ...]] = None

    def validate(self):
        if not (0.0 <= self.q <= 100.0):
            raise InvariantError("q must lie in [0, 100]")
        if self.beta <= 0:
            raise InvariantError("beta must be positive")
        if self.kappa <= 0:
            raise InvariantError("kappa must be positive")
        if self.strategy not in STRATEGIES:
            raise InvariantError(
                f"unknown strategy {self.strategy!r}; expected {STRATEGIES}")
        if self.alpha_mode not in ("argmax", "threshold"):
            raise InvariantError(
                f"unknown alpha_mode {self.alpha_mode!r}")
        if self.alpha_mode == "threshold" and (
                self.alpha is None or not (0.0 < self.alpha <= 1.0)):
            raise InvariantError("threshold mode needs alpha in (0, 1]")
        if self.n_retrieve < 1:
            raise InvariantError("n_retrieve must be >= 1")


def resolve_layers(dump: IntrospectionDump, config: RunConfig) -> LayerRanges:
    base = default_layer_ranges(dump.dims.n_layers)
    return LayerRanges(
        l_vis=tuple(config.l_vis) if config.l_vis is not None else base.l_vis,
        l_txt=tuple(config.l_txt) if config.l_txt is not None else base.l_txt,
        l_sink=(tuple(config.l_sink) if config.l_sink is not None
                else base.l_sink))


def resolve_object_tokens(dump: IntrospectionDump):
    """Explicit indices when present, else the question heuristic."""
    seg = dump.segmentation
    if seg.object_indices is not None:
        return tuple(seg.object_indices), None
    if dump.question is None:
        raise InvariantError(
            "dump has neither object_indices nor question text; cannot "
            "locate the object mention")
    span = focus_from_question(dump.question)
    qa = seg.question_range[0]
    return tuple(qa + i for i in span.token_indices), span.text


def select_evidence(dump: IntrospectionDump, config: RunConfig = RunConfig()
                    ) -> dict:
    """Run the full selection pipeline; returns the report dict."""
    config.validate()
    layers = resolve_layers(dump, config)
    dims = dump.dims
    seg = dump.segmentation

    object_tokens, focus_text = resolve_object_tokens(dump)
    blocks = object_to_visual(dump, object_tokens, layers.l_vis)
    a_vis = aggregate_visual(blocks)

    if dump.sink_dims is not None:
        sink_dims = tuple(dump.sink_dims)
        sink_source = "provided"
    else:
        sink_dims = detect_sink_dims(dump, layers.l_sink, kappa=config.kappa)
        sink_source = "detected"

    grid_hw = (dims.grid_h, dims.grid_w)
    if sink_dims:
        s_sink = sink_scores(dump, sink_dims, layers.l_sink)
        tau, mask = sink_mask(s_sink, config.q)
        vis = filter_sinks(a_vis, s_sink, grid_hw, config.q)
    else:
        # Nothing to filter: scores are all zero and the mask stays empty.
        s_sink = np.zeros(dims.n_visual, dtype=np.float64)
        tau = 0.0
        mask = np.zeros(dims.n_visual, dtype=bool)
        vis = filter_sinks(a_vis, s_sink, grid_hw, q=100.0)

    box = bbox(vis.grid, dump.image, strategy=config.strategy,
               beta=config.beta, threshold=config.bbox_threshold,
               kernel=config.bbox_kernel)

    ca, cb = seg.context_range
    if cb - ca > 0 and seg.sentence_spans:
        rows = last_to_context(dump, layers.l_txt)
        a_txt = aggregate_textual(rows)
        rel_spans = [(a - ca, b - ca) for a, b in seg.sentence_spans]
        txt = select_sentences(a_txt, rel_spans, mode=config.alpha_mode,
                               alpha=config.alpha)
        sentence_scores = list(txt.sentence_scores)
        selected = list(txt.selected)
        a_txt_list = [float(v) for v in a_txt]
    else:
        # Vision-only run: no retrieved context to score.
        sentence_scores = []
        selected = []
        a_txt_list = []

    return {
        "schema": REPORT_SCHEMA,
        "a_vis": [float(v) for v in a_vis],
        "s_sink": [float(v) for v in s_sink],
        "tau": float(tau),
        "mask": [bool(v) for v in mask],
        "strategy": box.strategy,
        "bbox_grid": [float(v) for v in box.grid_box],
        "bbox_px": [float(v) for v in box.pixel_box],
        "a_txt": a_txt_list,
        "sentence_scores": sentence_scores,
        "selected_sentences": selected,
        "alpha_mode": config.alpha_mode,
        "object_tokens": [int(t) for t in object_tokens],
        "focus_text": focus_text,
        "grid": {"h": dims.grid_h, "w": dims.grid_w},
        "image": {"width_px": dump.image.width_px,
                  "height_px": dump.image.height_px},
        "sink_dims": [int(m) for m in sink_dims],
        "sink_source": sink_source,
        "params": {
            "q": config.q, "beta": config.beta, "kappa": config.kappa,
            "alpha": config.alpha, "granularity": config.granularity,
            "n_retrieve": config.n_retrieve,
            "bbox_threshold": config.bbox_threshold,
            "bbox_kernel": config.bbox_kernel,
            "l_vis": [int(l) for l in layers.l_vis],
            "l_txt": [int(l) for l in layers.l_txt],
            "l_sink": [int(l) for l in layers.l_sink],
        },
    }


def highlight(dump: IntrospectionDump, config: RunConfig = RunConfig(),
              question_text: Optional[str] = None, context=None,
              markers: MarkerSet = DEFAULT_MARKERS,
              report: Optional[dict] = None) -> Tuple[dict, MarkedPrompt]:
    """Select evidence and build the highlighted prompt in one call.

    ``context`` overrides the dump's embedded context block (text plus
    sentence character spans); the question text falls back to the dump's
    question block. Returns (report, prompt).
    """
    if report is None:
        report = select_evidence(dump, config)
    if question_text is None:
        if dump.question is None:
            raise InvariantError("no question text available for the prompt")
        question_text = dump.question.text
    ctx = context if context is not None else dump.context
    selected = report["selected_sentences"]
    if ctx is None:
        if selected and config.granularity != "none":
            raise InvariantError(
                "selected sentences cannot be marked without context text "
                "and sentence character spans")
        ctx_text, char_spans, passage_spans = "", [], None
    else:
        ctx_text = ctx.text
        char_spans = list(ctx.sentence_char_spans)
        passage_spans = ctx.passage_char_spans

    prompt = build_prompt(
        question_text, ctx_text, char_spans, selected,
        report["bbox_px"], dump.image, granularity=config.granularity,
        include_full_image=config.include_full_image, markers=markers,
        passage_char_spans=passage_spans, n_visual=dump.dims.n_visual)
    return report, prompt
