"""Text-side bookkeeping: sentence spans, passages, object spans.

The capture pass needs character spans for sentences (so the selection
engine can mark them later) plus a token-level grouping that tiles the
context token range exactly. Sentence splitting is a regex splitter —
good enough for retrieved encyclopedia text; swap in a real splitter if
your corpus needs one. Object-span extraction prefers a dependency
parse when spacy is importable and falls back to a content-run
heuristic otherwise.
"""

import re
from typing import List, Optional, Sequence, Tuple

Span = Tuple[int, int]

_SENT_BREAK = re.compile(r"(?<=[.!?])[\"')\]]*\s+")

_STOP = frozenset(
    "a an the is are was were be been of in on at to for with this that "
    "these those what which who whom whose where when why how it its his "
    "her their there do does did can could will would shown pictured "
    "picture image photo".split())


def sentence_char_spans(text: str) -> List[Span]:
    """Half-open char spans of sentences; skips inter-sentence whitespace."""
    spans = []
    start = 0
    for m in _SENT_BREAK.finditer(text):
        if m.start() > start:
            spans.append((start, m.start() + len(m.group().rstrip())))
        start = m.end()
    tail = text[start:].rstrip()
    if tail:
        spans.append((start, start + len(tail)))
    if not spans and text.strip():
        s = text.strip()
        a = text.index(s)
        spans.append((a, a + len(s)))
    return spans


def passage_char_spans(text: str) -> Optional[List[Span]]:
    """Blank-line-separated blocks, or None when there is only one."""
    spans = []
    pos = 0
    for chunk in text.split("\n\n"):
        stripped = chunk.strip("\n")
        if stripped:
            a = text.index(stripped, pos)
            spans.append((a, a + len(stripped)))
        pos += len(chunk) + 2
    return spans if len(spans) > 1 else None


def group_tokens_by_sentence(token_offsets: Sequence[Span],
                             sent_spans: Sequence[Span],
                             base: int) -> Tuple[List[Span], List[int]]:
    """Token spans (offset by ``base``) tiling the context range.

    Each token joins the last sentence whose span starts at or before
    the token start, so stray inter-sentence tokens can't create gaps.
    Returns ``(token_spans, kept)``: one half-open token span per
    sentence that received at least one token, contiguous by
    construction, plus the indices of those sentences — callers must
    subset their char spans to ``kept`` so the two lists stay parallel.
    """
    if not token_offsets:
        return [], []
    if not sent_spans:
        return [(base, base + len(token_offsets))], [0]
    assignment = []
    for a, _ in token_offsets:
        j = 0
        for k, (sa, _) in enumerate(sent_spans):
            if sa <= a:
                j = k
            else:
                break
        assignment.append(j)
    spans = []
    kept = []
    run_start = 0
    for i in range(1, len(assignment) + 1):
        if i == len(assignment) or assignment[i] != assignment[run_start]:
            spans.append((base + run_start, base + i))
            kept.append(assignment[run_start])
            run_start = i
    return spans, kept


def _fallback_object_tokens(question: str,
                            token_offsets: Sequence[Span]) -> List[int]:
    """Last contiguous run of content tokens — the parser stand-in."""
    content = [k for k, (a, b) in enumerate(token_offsets)
               if any(ch.isalpha() for ch in question[a:b])
               and question[a:b].lower().strip("'") not in _STOP]
    if not content:
        return [len(token_offsets) - 1] if token_offsets else []
    run = [content[-1]]
    for k in reversed(content[:-1]):
        if k == run[0] - 1:
            run.insert(0, k)
        else:
            break
    return run


def object_token_indices(question: str,
                         token_offsets: Sequence[Span]) -> List[int]:
    """Token indices (into the question) naming the asked-about object.

    With spacy available: the last noun-chunk's tokens mapped back onto
    our offsets. Otherwise the content-run fallback. Either way the
    result is non-empty for any question with at least one token.
    """
    try:
        import spacy  # type: ignore
    except ImportError:
        return _fallback_object_tokens(question, token_offsets)
    try:
        nlp = spacy.load("en_core_web_sm")
    except Exception:
        return _fallback_object_tokens(question, token_offsets)
    doc = nlp(question)
    chunks = list(doc.noun_chunks)
    if not chunks:
        return _fallback_object_tokens(question, token_offsets)
    chunk = chunks[-1]
    picked = [k for k, (a, b) in enumerate(token_offsets)
              if a >= chunk.start_char and b <= chunk.end_char]
    return picked or _fallback_object_tokens(question, token_offsets)
