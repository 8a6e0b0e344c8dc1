"""Deterministic stand-in model.

A tiny fake "MLLM" that produces well-formed captures without any
weights: 4 layers, 2 heads, hidden size 64, one 64px patch per visual
token. Everything is a pure function of (model seed, image size,
question, context), seeded through sha256, so repeated captures are
byte-identical — which is what the conformance tests lean on.

The attention it fabricates is shaped, not random noise: question-token
rows concentrate on one grid cell picked from the question hash, and the
final row up-weights context tokens that literally share words with the
question. Hidden rows carry a massive spike on one dimension for the
BOS row and one visual token, mimicking the attention-sink signature
real decoders exhibit.

``FakeModel(leaky=True)`` is a misbehaving variant that parrots marker
tokens back into its answer; it exists so the leak detector in the
answer pass has something to catch.
"""

import hashlib
import re
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

_TOKEN = re.compile(r"\w+|[^\w\s]")
_MARKER = re.compile(r"<[A-Z][A-Z0-9_]*>")

_STOP = frozenset(
    "a an the is are was were be been of in on at to for with and or "
    "this that what which who where when why how it its do does did".split())

PATCH_PX = 64
SPIKE = 200.0


def _rng(*parts) -> np.random.Generator:
    """Generator seeded from a stable hash of the parts."""
    key = "\x1f".join(str(p) for p in parts).encode("utf-8")
    return np.random.default_rng(
        int.from_bytes(hashlib.sha256(key).digest()[:8], "little"))


def _content_words(text: str) -> List[str]:
    return [w.lower() for w in re.findall(r"[A-Za-z]+", text)
            if w.lower() not in _STOP]


class Capture:
    """One forward pass worth of introspection, in model coordinates."""

    def __init__(self, seq_len, bos_pos, visual_range, question_range,
                 context_range, final_pos, attention, hidden, sink_dim,
                 first_token):
        self.seq_len = seq_len
        self.bos_pos = bos_pos
        self.visual_range = visual_range
        self.question_range = question_range
        self.context_range = context_range
        self.final_pos = final_pos
        self.attention = attention      # {layer: (rows, [K, n_rows, S])}
        self.hidden = hidden            # {layer: (rows, [n_rows, d])}
        self.sink_dim = sink_dim
        self.first_token = first_token


class FakeModel:
    """Weightless model with the introspection surface the capture needs."""

    name = "fake"
    n_layers = 4
    n_heads = 2
    hidden = 64

    def __init__(self, seed: int = 0, leaky: bool = False):
        self.seed = int(seed)
        self.leaky = bool(leaky)

    # --- tokenizer -------------------------------------------------------

    def tokenize(self, text: str) -> List[Tuple[int, int]]:
        """Char offsets of word/punctuation tokens."""
        return [(m.start(), m.end()) for m in _TOKEN.finditer(text)]

    def grid_for(self, width_px: int, height_px: int) -> Tuple[int, int]:
        """Visual grid: one token per 64px patch, clamped to [2, 8]."""
        gh = min(8, max(2, round(height_px / PATCH_PX)))
        gw = min(8, max(2, round(width_px / PATCH_PX)))
        return gh, gw

    # --- pass 1: capture -------------------------------------------------

    def plan(self, *, width_px: int, height_px: int, question: str,
             context: Optional[str] = None) -> Dict[str, Tuple[int, int]]:
        """Token layout of the would-be prompt, without running anything.

        Model layout: [bos][3 system tokens][visual][question][context?]
        [final]. Callers use this to pick which rows to capture.
        """
        gh, gw = self.grid_for(width_px, height_px)
        nv = gh * gw
        nt = len(self.tokenize(question))
        nc = len(self.tokenize(context)) if context else 0
        if nt == 0:
            raise ValueError("question produced no tokens")
        vs = 4                       # bos + 3 system tokens
        qs, cs = vs + nv, vs + nv + nt
        final = cs + nc
        return {"bos": (0, 1), "visual": (vs, qs), "question": (qs, cs),
                "context": (cs, final), "final": (final, final + 1),
                "seq": (0, final + 1)}

    def run_pass(self, *, width_px: int, height_px: int, question: str,
                 context: Optional[str] = None,
                 capture_layers: Sequence[int],
                 capture_rows: Optional[Sequence[int]] = None) -> Capture:
        """Fabricate one forward pass and slice out the requested rows.

        ``capture_rows`` are model positions (see :meth:`plan`); None
        captures the full matrix. Hidden rows are always visual + bos.
        """
        layout = self.plan(width_px=width_px, height_px=height_px,
                           question=question, context=context)
        vs, qs = layout["visual"]
        cs, final = layout["context"]
        S = layout["seq"][1]
        gh, gw = self.grid_for(width_px, height_px)
        nv = gh * gw
        c_off = self.tokenize(context) if context else []
        nc = len(c_off)

        key = (self.seed, width_px, height_px, question, context or "")
        peak = int(_rng(*key, "peak").integers(nv))
        sink_dim = int(_rng(self.seed, "sinkdim").integers(self.hidden))
        sink_tok = int(_rng(*key, "sinktok").integers(nv))
        if sink_tok == peak:
            sink_tok = (peak + 1) % nv

        # Context positions sharing a content word with the question get
        # the evidence boost on the final row.
        q_words = set(_content_words(question))
        boosted = [k for k, (a, b) in enumerate(c_off)
                   if context[a:b].lower() in q_words]

        if capture_rows is None:
            rows = list(range(S))
        else:
            rows = sorted(set(int(r) for r in capture_rows))
        question_rows = set(range(qs, cs))

        def base_row(pos: int) -> np.ndarray:
            row = np.zeros(S, dtype=np.float64)
            if pos in question_rows:
                row[vs:vs + nv] = 0.15 / nv
                row[vs + peak] += 0.75
                row[pos] = 0.05
            elif pos == final:
                if nc:
                    w = np.ones(nc)
                    for k in boosted:
                        w[k] = 4.0
                    row[cs:cs + nc] = 0.75 * w / w.sum()
                    row[vs:vs + nv] = 0.12 / nv
                    row[vs + peak] += 0.06
                else:
                    row[vs:vs + nv] = 0.85 / nv
                    row[vs + peak] += 0.10
                row[pos] = 0.02
            else:
                row[:pos + 1] = 1.0 / (pos + 1)
            return row

        attention: Dict[int, Tuple[np.ndarray, np.ndarray]] = {}
        hidden: Dict[int, Tuple[np.ndarray, np.ndarray]] = {}
        hid_rows = list(range(vs, vs + nv)) + [0]
        for layer in sorted(set(int(l) for l in capture_layers)):
            vals = np.empty((self.n_heads, len(rows), S), dtype=np.float64)
            for i, pos in enumerate(rows):
                base = base_row(pos)
                for head in range(self.n_heads):
                    g = _rng(*key, "attn", layer, head, pos)
                    jitter = base * g.uniform(0.9, 1.1, size=S)
                    vals[head, i] = 0.97 * jitter / jitter.sum()
            attention[layer] = (np.asarray(rows, dtype=np.int64),
                                vals.astype(np.float32))

            hv = _rng(*key, "hid", layer).uniform(
                0.5, 1.5, size=(len(hid_rows), self.hidden))
            hv[len(hid_rows) - 1, sink_dim] = SPIKE         # bos row
            hv[sink_tok, sink_dim] = SPIKE                  # one visual sink
            hidden[layer] = (np.asarray(sorted(hid_rows), dtype=np.int64),
                             np.asarray(
                                 [hv[hid_rows.index(r)]
                                  for r in sorted(hid_rows)],
                                 dtype=np.float32))

        content = _content_words(question)
        first_token = content[-1] if content else "yes"
        return Capture(S, 0, (vs, vs + nv), (qs, cs), (cs, final), final,
                       attention, hidden, sink_dim, first_token)

    # --- pass 2: answer --------------------------------------------------

    def generate(self, system_text: str, user_text: str,
                 markers: Sequence[str] = ()) -> str:
        """Deterministic short answer from the assembled prompt.

        Picks the asked-about object from the question line and, when a
        highlighted span is present, one supporting word from inside it.
        The leaky variant also echoes a marker token — deliberately
        violating the system instruction — so leak detection has a
        positive case.
        """
        parts = [p for p in user_text.split("\n\n") if p.strip()]
        # The live question is the last block shaped like one; few-shot
        # exemplar blocks end in their answers, context blocks in periods.
        ends = [p for p in parts
                if p.rstrip().endswith("?") and "[image" not in p]
        question = ends[-1] if ends else next(
            (p for p in reversed(parts) if "?" in p and "[image" not in p),
            parts[-1] if parts else "")
        content = _content_words(question)
        obj = " ".join(content[-2:]) if content else "it"

        # Support word: first fresh content word inside a highlighted
        # text span (the txt marker pair when the caller names it, else
        # any marker pair that brackets actual prose).
        support = ""
        pairs = []
        if len(markers) >= 2 and markers[0] and markers[1]:
            a = user_text.find(markers[0])
            if a >= 0:
                b = user_text.find(markers[1], a)
                if b > a:
                    pairs.append(user_text[a + len(markers[0]):b])
        if not pairs:
            hits = list(_MARKER.finditer(user_text))
            for m, nxt in zip(hits, hits[1:]):
                pairs.append(user_text[m.end():nxt.start()])
        for inside_text in pairs:
            if "[image" in inside_text:
                continue
            inside = [w for w in _content_words(inside_text)
                      if w not in content]
            if inside:
                support = inside[0]
                break

        answer = f"The {obj} is {support}." if support else f"The {obj}."
        if self.leaky:
            found = _MARKER.search(user_text) or _MARKER.search(system_text)
            if found:
                answer = f"{found.group()} {answer}"
        return answer


def load_model(name: str, **kwargs) -> FakeModel:
    """Resolve a model identifier; the hf module extends this set."""
    if name == "fake":
        return FakeModel(**kwargs)
    if name == "fake-leaky":
        return FakeModel(leaky=True, **kwargs)
    raise ValueError(f"unknown fake model {name!r}; see the hf module for "
                     "real backends")
