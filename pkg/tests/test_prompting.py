"""Prompt assembly: golden templates, marker round trips, crops."""

import os

import pytest

from evsel.dumpio import ImageMeta
from evsel.errors import InvariantError
from evsel.prng import Stream
from evsel.prompting import (DEFAULT_MARKERS, MarkerSet, build_prompt,
                             crop_spec, mark_spans, merge_char_spans,
                             split_passages, strip_markers, system_text)

GOLDEN = os.path.join(os.path.dirname(__file__), "golden")
IMG = ImageMeta(width_px=400, height_px=300)

CTX = "Alpha lake sits high. Beta lake is larger. Gamma lake is frozen."
SPANS = [(0, 21), (22, 42), (43, 64)]


def _golden(name):
    with open(os.path.join(GOLDEN, name), "r", encoding="utf-8") as f:
        return f.read().rstrip("\n")


def test_system_text_matches_golden():
    assert system_text() == _golden("system_prompt.txt")


def test_user_text_matches_golden():
    prompt = build_prompt("Which lake is this?", CTX, SPANS, [1],
                          (50, 40, 200, 160), IMG)
    assert prompt.user_text == _golden("user_prompt.txt")
    assert prompt.system_text == _golden("system_prompt.txt")


def test_full_image_block_prepended():
    prompt = build_prompt("Q?", CTX, SPANS, [0], (0, 0, 10, 10), IMG,
                          include_full_image=True)
    assert prompt.user_text.startswith(
        "[image]\n\n<START_IMPORTANT_IMG> [image_cropped] "
        "<END_IMPORTANT_IMG>\n\n")


def test_marker_strip_round_trip_simple():
    marked = mark_spans(CTX, [SPANS[1]])
    assert strip_markers(marked) == CTX
    assert marked.count(DEFAULT_MARKERS.txt_start) == 1
    assert marked.count(DEFAULT_MARKERS.txt_end) == 1


def test_marker_strip_round_trip_random():
    rng = Stream(31)
    alphabet = "abcdef ghij.\n"
    for trial in range(200):
        n = rng.integers(0, 60)
        text = "".join(alphabet[rng.integers(0, len(alphabet))]
                       for _ in range(n))
        spans = []
        for _ in range(rng.integers(0, 5)):
            a = rng.integers(0, n + 1)
            b = rng.integers(0, n + 1)
            spans.append((min(a, b), max(a, b)))
        marked = mark_spans(text, spans)
        assert strip_markers(marked) == text
        # balanced and non-nested
        assert marked.count(DEFAULT_MARKERS.txt_start) \
            == marked.count(DEFAULT_MARKERS.txt_end)


def test_merged_spans_do_not_nest():
    marked = mark_spans("abcdefgh", [(0, 4), (2, 6)])
    assert marked == ("<START_IMPORTANT_TXT>abcdef<END_IMPORTANT_TXT>gh")
    # touching spans merge too
    marked = mark_spans("abcdefgh", [(0, 3), (3, 5)])
    assert marked == ("<START_IMPORTANT_TXT>abcde<END_IMPORTANT_TXT>fgh")


def test_merge_char_spans():
    assert merge_char_spans([(5, 7), (0, 2), (2, 4)]) == [(0, 4), (5, 7)]
    assert merge_char_spans([]) == []
    with pytest.raises(InvariantError):
        merge_char_spans([(4, 2)])


def test_marker_collision_rejected():
    with pytest.raises(InvariantError, match="already contains"):
        mark_spans("has <START_IMPORTANT_TXT> inside", [(0, 2)])


def test_span_outside_text_rejected():
    with pytest.raises(InvariantError, match="outside"):
        mark_spans("short", [(0, 99)])


def test_granularities():
    base = dict(question="Q?", context_text=CTX,
                sentence_char_spans=SPANS, selected=[1],
                pixel_box=(0, 0, 10, 10), image=IMG)
    sent = build_prompt(**base, granularity="sentence")
    assert "<START_IMPORTANT_TXT>Beta lake is larger.<END_IMPORTANT_TXT>" \
        in sent.user_text
    allc = build_prompt(**base, granularity="all_context")
    assert allc.user_text.count("<START_IMPORTANT_TXT>") == 1
    assert strip_markers(allc.user_text).endswith(CTX)
    none = build_prompt(**base, granularity="none")
    assert "<START_IMPORTANT_TXT>" not in none.user_text
    with pytest.raises(InvariantError, match="granularity"):
        build_prompt(**base, granularity="word")


def test_passage_granularity():
    ctx = "First para one. First para two.\n\nSecond para only."
    spans = [(0, 15), (16, 31), (33, 50)]
    prompt = build_prompt("Q?", ctx, spans, [0], (0, 0, 10, 10), IMG,
                          granularity="passage")
    assert "<START_IMPORTANT_TXT>First para one. First para two."\
        "<END_IMPORTANT_TXT>" in prompt.user_text
    assert split_passages(ctx) == [(0, 31), (33, 50)]


def test_selected_out_of_range():
    with pytest.raises(InvariantError, match="selected"):
        build_prompt("Q?", CTX, SPANS, [7], (0, 0, 10, 10), IMG)


def test_empty_context_omits_lead():
    prompt = build_prompt("Q?", "", [], [], (0, 0, 10, 10), IMG)
    assert "paragraphs" not in prompt.user_text
    assert prompt.user_text == ("<START_IMPORTANT_IMG> [image_cropped] "
                                "<END_IMPORTANT_IMG>\n\nQ?")


def test_custom_markers():
    m = MarkerSet(txt_start="<T>", txt_end="</T>", img_start="<I>",
                  img_end="</I>")
    prompt = build_prompt("Q?", CTX, SPANS, [0], (0, 0, 10, 10), IMG,
                          markers=m)
    assert "<T>Alpha lake sits high.</T>" in prompt.user_text
    assert "<I> [image_cropped] </I>" in prompt.user_text
    assert strip_markers(prompt.user_text, m).startswith(" [image_cropped] ")


def test_crop_rounds_outward_and_clamps():
    spec = crop_spec((100.2, 50.7, 200.1, 150.3),
                     ImageMeta(width_px=640, height_px=480))
    assert spec.box == (100, 50, 201, 151)
    spec = crop_spec((-5.0, -3.0, 9999.0, 9999.0),
                     ImageMeta(width_px=640, height_px=480))
    assert spec.box == (0, 0, 640, 480)


def test_crop_token_estimate():
    img = ImageMeta(width_px=100, height_px=100)
    full = crop_spec((0, 0, 100, 100), img, n_visual=291)
    assert full.est_tokens == pytest.approx(291.0)
    quarter = crop_spec((0, 0, 50, 50), img, n_visual=400)
    assert quarter.est_tokens == pytest.approx(100.0)


def test_crop_rejects_bad_boxes():
    with pytest.raises(InvariantError, match="extent"):
        crop_spec((10, 10, 5, 20), IMG)
    with pytest.raises(InvariantError, match="zero area"):
        crop_spec((-10, -10, -1, -1), IMG)
