"""Building the marker-highlighted second-pass prompt.

The answer pass receives the original question, the retrieved context with
evidence sentences wrapped in textual markers, and the cropped image
region wrapped in visual markers; the system text tells the model the
markers denote crucial evidence and must not be echoed. Placeholders
``[image]`` / ``[image_cropped]`` stand where the consuming runtime
injects actual image content.

Markers are inserted bare (no padding), so stripping them from a marked
context recovers the original text byte-for-byte.
"""

import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

from .dumpio import ImageMeta
from .errors import InvariantError

GRANULARITIES = ("sentence", "passage", "all_context", "none")


@dataclass(frozen=True)
class MarkerSet:
    txt_start: str = "<START_IMPORTANT_TXT>"
    txt_end: str = "<END_IMPORTANT_TXT>"
    img_start: str = "<START_IMPORTANT_IMG>"
    img_end: str = "<END_IMPORTANT_IMG>"

    def all(self):
        return (self.txt_start, self.txt_end, self.img_start, self.img_end)


DEFAULT_MARKERS = MarkerSet()

_SYSTEM_TEMPLATE = (
    "Answer the encyclopedic question about the given image. Do not mention "
    "the visual content of image in your output. Directly output the answer "
    "of the question according to the context.\n"
    "\n"
    "If the paragraphs do not contain the information required to answer the "
    "question, you should answer the question using your knowledge.\n"
    "\n"
    "{img_start} and {img_end} are used to mark the important visual "
    "evidence. Do not output the markers.\n"
    "\n"
    "{txt_start} and {txt_end} are used to mark the important textual "
    "evidence. Do not output the markers."
)

_CONTEXT_LEAD = ("The following paragraphs may contain useful information "
                 "to help answer the question correctly:")


def system_text(markers: MarkerSet = DEFAULT_MARKERS) -> str:
    return _SYSTEM_TEMPLATE.format(img_start=markers.img_start,
                                   img_end=markers.img_end,
                                   txt_start=markers.txt_start,
                                   txt_end=markers.txt_end)


def merge_char_spans(spans: Sequence[Tuple[int, int]]) -> List[Tuple[int, int]]:
    """Sort spans and merge any that overlap or touch."""
    ordered = sorted((int(a), int(b)) for a, b in spans)
    merged: List[Tuple[int, int]] = []
    for a, b in ordered:
        if a > b:
            raise InvariantError(f"invalid span ({a}, {b})")
        if merged and a <= merged[-1][1]:
            merged[-1] = (merged[-1][0], max(merged[-1][1], b))
        else:
            merged.append((a, b))
    return merged


def mark_spans(text: str, spans: Sequence[Tuple[int, int]],
               markers: MarkerSet = DEFAULT_MARKERS) -> str:
    """Wrap each (merged) span of ``text`` in textual markers."""
    for m in markers.all():
        if not m:
            raise InvariantError("markers must be non-empty strings")
        if m in text:
            raise InvariantError(f"text already contains marker {m!r}")
    merged = merge_char_spans(spans)
    if merged and not (0 <= merged[0][0] and merged[-1][1] <= len(text)):
        raise InvariantError("selected span outside context text")
    pieces = []
    cursor = 0
    for a, b in merged:
        pieces.append(text[cursor:a])
        pieces.append(markers.txt_start)
        pieces.append(text[a:b])
        pieces.append(markers.txt_end)
        cursor = b
    pieces.append(text[cursor:])
    return "".join(pieces)


def strip_markers(text: str, markers: MarkerSet = DEFAULT_MARKERS) -> str:
    """Remove every marker occurrence; inverse of mark_spans on its output."""
    for m in markers.all():
        text = text.replace(m, "")
    return text


def split_passages(text: str) -> List[Tuple[int, int]]:
    """Blank-line-separated passage spans covering all non-gap text."""
    spans = []
    pos = 0
    for chunk in text.split("\n\n"):
        if chunk:
            spans.append((pos, pos + len(chunk)))
        pos += len(chunk) + 2
    return spans


@dataclass(frozen=True)
class CropSpec:
    """Integer pixel crop (outward-rounded, clamped to the image)."""

    x1: int
    y1: int
    x2: int
    y2: int
    est_tokens: Optional[float] = None

    @property
    def box(self):
        return (self.x1, self.y1, self.x2, self.y2)


def crop_spec(pixel_box, image: ImageMeta, n_visual: Optional[int] = None
              ) -> CropSpec:
    """Round a float pixel box outward to an integer crop within the image.

    When ``n_visual`` is given, estimates the visual token count of the
    crop as ``n_visual * crop_area / image_area`` (linear patch model).
    """
    x1, y1, x2, y2 = (float(v) for v in pixel_box)
    if not all(math.isfinite(v) for v in (x1, y1, x2, y2)):
        raise InvariantError("non-finite pixel box")
    if x2 < x1 or y2 < y1:
        raise InvariantError("pixel box has negative extent")
    ix1 = max(0, math.floor(x1))
    iy1 = max(0, math.floor(y1))
    ix2 = min(image.width_px, math.ceil(x2))
    iy2 = min(image.height_px, math.ceil(y2))
    if ix2 <= ix1 or iy2 <= iy1:
        raise InvariantError("crop collapses to zero area inside the image")
    est = None
    if n_visual is not None:
        area_frac = ((ix2 - ix1) * (iy2 - iy1)) / (image.width_px * image.height_px)
        est = n_visual * area_frac
    return CropSpec(ix1, iy1, ix2, iy2, est)


@dataclass(frozen=True)
class MarkedPrompt:
    """Everything the answer pass needs, ready for serialization."""

    system_text: str
    user_text: str
    crop_px: Tuple[int, int, int, int]
    granularity: str
    include_full_image: bool
    markers: MarkerSet = DEFAULT_MARKERS

    def to_json(self):
        return {
            "schema": "evsel.prompt/1",
            "system_text": self.system_text,
            "user_text": self.user_text,
            "crop_px": list(self.crop_px),
            "include_full_image": self.include_full_image,
            "granularity": self.granularity,
            "markers": {
                "txt_start": self.markers.txt_start,
                "txt_end": self.markers.txt_end,
                "img_start": self.markers.img_start,
                "img_end": self.markers.img_end,
            },
        }


def _spans_to_mark(granularity, context_text, sentence_char_spans, selected,
                   passage_char_spans):
    if granularity == "none":
        return []
    if granularity == "all_context":
        return [(0, len(context_text))]
    spans = [(int(a), int(b)) for a, b in sentence_char_spans]
    for j in selected:
        if not (0 <= j < len(spans)):
            raise InvariantError(f"selected sentence {j} out of range")
    picked = [spans[j] for j in selected]
    if granularity == "sentence":
        return picked
    # passage granularity: widen each picked sentence to its passage
    passages = ([(int(a), int(b)) for a, b in passage_char_spans]
                if passage_char_spans else split_passages(context_text))
    out = []
    for a, b in picked:
        hit = next(((pa, pb) for pa, pb in passages if pa < b and a < pb), None)
        if hit is None:
            raise InvariantError(
                f"no passage covers selected sentence span ({a}, {b})")
        out.append(hit)
    return out


def build_prompt(question: str, context_text: str,
                 sentence_char_spans: Sequence[Tuple[int, int]],
                 selected: Sequence[int], pixel_box, image: ImageMeta,
                 granularity: str = "sentence",
                 include_full_image: bool = False,
                 markers: MarkerSet = DEFAULT_MARKERS,
                 passage_char_spans: Optional[Sequence[Tuple[int, int]]] = None,
                 n_visual: Optional[int] = None) -> MarkedPrompt:
    """Assemble the highlighted answer-pass prompt.

    ``pixel_box`` is the predicted evidence box in pixel coordinates; it is
    rounded outward to an integer crop within the image. With
    ``include_full_image`` the user text carries the uncropped image block
    first (used on benchmarks needing global scene context).
    """
    if granularity not in GRANULARITIES:
        raise InvariantError(
            f"unknown granularity {granularity!r}; expected {GRANULARITIES}")
    for m in markers.all():
        if m in question:
            raise InvariantError(f"question already contains marker {m!r}")
    crop = crop_spec(pixel_box, image, n_visual=n_visual)

    spans = _spans_to_mark(granularity, context_text, sentence_char_spans,
                           selected, passage_char_spans)
    marked_context = mark_spans(context_text, spans, markers)

    img_block = f"{markers.img_start} [image_cropped] {markers.img_end}"
    if include_full_image:
        img_block = "[image]\n\n" + img_block
    parts = [img_block, question]
    if context_text:
        parts += [_CONTEXT_LEAD, marked_context]
    user = "\n\n".join(parts)

    return MarkedPrompt(system_text=system_text(markers), user_text=user,
                        crop_px=crop.box, granularity=granularity,
                        include_full_image=include_full_image,
                        markers=markers)
