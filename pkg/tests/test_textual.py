"""Query-row context relevance and sentence selection."""

import numpy as np
import pytest

from evsel import oracles
from evsel.errors import InvariantError
from evsel.prng import Stream
from evsel.synth import random_dump
from evsel.textual import (aggregate_textual, last_to_context,
                           select_sentences)
from evsel.visual import default_layer_ranges


def test_last_to_context_matches_oracle():
    for seed in range(8):
        dump = random_dump(seed + 100)
        layers = default_layer_ranges(dump.dims.n_layers).l_txt
        rows = last_to_context(dump, layers)
        a_txt = aggregate_textual(rows)
        want = oracles.textual_relevance([rows[l].tolist() for l in layers])
        np.testing.assert_allclose(a_txt, want, atol=1e-9)
        ca, cb = dump.segmentation.context_range
        assert a_txt.shape == (cb - ca,)
        assert a_txt.min() >= 0.0


def test_last_to_context_rejects_empty_context():
    from dataclasses import replace
    dump = random_dump(3)
    seg = dump.segmentation
    ca, cb = seg.context_range
    dump.segmentation = replace(seg, context_range=(ca, ca),
                                sentence_spans=())
    with pytest.raises(InvariantError, match="no retrieved context"):
        last_to_context(dump, (0,))


def test_last_to_context_rejects_row_inside_context():
    dump = random_dump(4)
    ca, cb = dump.segmentation.context_range
    with pytest.raises(InvariantError, match="follow the context"):
        last_to_context(dump, (0,), query_row=cb - 1)


def test_sentence_scores_are_span_means():
    a = np.asarray([0.1, 0.3, 0.2, 0.6, 0.0, 0.0])
    res = select_sentences(a, [(0, 2), (2, 4), (4, 6)])
    assert res.sentence_scores == pytest.approx((0.2, 0.4, 0.0))
    assert res.selected == (1,)
    assert res.mode == "argmax"


def test_argmax_tie_prefers_first():
    a = np.asarray([0.5, 0.5, 0.5, 0.5])
    res = select_sentences(a, [(0, 2), (2, 4)])
    assert res.selected == (0,)


def test_span_permutation_permutes_scores():
    rng = Stream(21)
    a = rng.floats(12)
    spans = [(0, 3), (3, 7), (7, 12)]
    base = select_sentences(a, spans).sentence_scores
    perm = select_sentences(a, [spans[2], spans[0], spans[1]]).sentence_scores
    assert perm == (base[2], base[0], base[1])


def test_threshold_mode():
    a = np.asarray([1.0, 0.9, 0.2, 0.85])
    spans = [(0, 1), (1, 2), (2, 3), (3, 4)]
    res = select_sentences(a, spans, mode="threshold", alpha=0.88)
    assert res.selected == (0, 1)
    res = select_sentences(a, spans, mode="threshold", alpha=0.5)
    assert res.selected == (0, 1, 3)
    res = select_sentences(a, spans, mode="threshold", alpha=1.0)
    assert res.selected == (0,)


def test_threshold_mode_needs_alpha():
    a = np.ones(4)
    with pytest.raises(InvariantError, match="alpha"):
        select_sentences(a, [(0, 4)], mode="threshold")
    with pytest.raises(InvariantError, match="alpha"):
        select_sentences(a, [(0, 4)], mode="threshold", alpha=1.5)


def test_bad_spans_rejected():
    a = np.ones(4)
    with pytest.raises(InvariantError, match="span 0"):
        select_sentences(a, [(2, 2)])
    with pytest.raises(InvariantError, match="span 1"):
        select_sentences(a, [(0, 2), (2, 9)])
    with pytest.raises(InvariantError, match="no sentence spans"):
        select_sentences(a, [])


def test_unknown_mode_rejected():
    with pytest.raises(InvariantError, match="mode"):
        select_sentences(np.ones(2), [(0, 2)], mode="best")
