"""Capture-pass conformance: everything we write, the engine accepts."""

import pytest

from lotd_adapter import (AdapterConfig, CaptureContractError, FakeModel,
                          default_core_layers, dump_pass)
from lotd_adapter.segmentation import (group_tokens_by_sentence,
                                       passage_char_spans,
                                       sentence_char_spans)

from conftest import CONTEXT, IMAGE, QUESTION, evsel, evsel_json


def test_dump_passes_engine_validation(dump_path):
    path, meta = dump_path
    report = evsel_json("select", str(path))
    assert report["schema"] == "evsel.report/1"
    assert report["grid"] == {"h": meta["grid"][0], "w": meta["grid"][1]}
    assert report["object_tokens"] == meta["object_token_indices"]
    assert meta["first_token"] == "lighthouse"
    assert len(report["selected_sentences"]) == 1


def test_selected_sentence_mentions_object(dump_path, tmp_path):
    path, _ = dump_path
    out = tmp_path / "p.json"
    evsel_json("highlight", "--dump", str(path), "--out", str(out))
    import json
    prompt = json.loads(out.read_text())
    user = prompt["user_text"]
    a = user.index(prompt["markers"]["txt_start"])
    b = user.index(prompt["markers"]["txt_end"])
    marked = user[a:b]
    assert "heron" in marked and "perched" in marked


def test_dumps_are_byte_identical(tmp_path):
    paths = [tmp_path / f"d{i}.lotd" for i in range(2)]
    for p in paths:
        dump_pass(IMAGE, QUESTION, CONTEXT, AdapterConfig(), p)
    assert paths[0].read_bytes() == paths[1].read_bytes()


def test_seed_changes_dump(tmp_path):
    a = tmp_path / "a.lotd"
    b = tmp_path / "b.lotd"
    dump_pass(IMAGE, QUESTION, CONTEXT, AdapterConfig(seed=0), a)
    dump_pass(IMAGE, QUESTION, CONTEXT, AdapterConfig(seed=1), b)
    assert a.read_bytes() != b.read_bytes()


def test_partial_capture_is_rejected_by_engine(tmp_path):
    config = AdapterConfig(capture_layers=(0,))
    with pytest.raises(CaptureContractError):
        config.check_coverage(FakeModel().n_layers)

    path = tmp_path / "partial.lotd"
    dump_pass(IMAGE, QUESTION, CONTEXT, config, path,
              enforce_coverage=False)
    code, _, err = evsel("select", str(path))
    assert code == 2
    assert "layer" in err


def test_vision_only_dump(tmp_path):
    path = tmp_path / "vo.lotd"
    meta = dump_pass("200x200", "What color is the boat?", None,
                     AdapterConfig(), path)
    assert meta["token_counts"]["context"] == 0
    report = evsel_json("select", str(path))
    assert report["selected_sentences"] == []


def test_full_row_capture_validates(tmp_path):
    path = tmp_path / "full.lotd"
    meta = dump_pass(IMAGE, QUESTION, CONTEXT,
                     AdapterConfig(row_sliced=False), path)
    assert meta["row_sliced"] is False
    assert evsel_json("select", str(path))["schema"] == "evsel.report/1"


def test_declared_sinks_skip_detection(tmp_path):
    path = tmp_path / "sinks.lotd"
    dump_pass(IMAGE, QUESTION, CONTEXT, AdapterConfig(), path,
              declare_sinks=True)
    report = evsel_json("select", str(path))
    assert report["sink_source"] == "provided"
    assert len(report["sink_dims"]) == 1


def test_multi_paragraph_context_supports_passages(tmp_path):
    ctx = ("The tower stands on a cliff. It was built in 1854.\n\n"
           "A grey heron is often perched on the red lighthouse rail. "
           "Locals call it the harbor guard.")
    path = tmp_path / "para.lotd"
    dump_pass(IMAGE, QUESTION, ctx, AdapterConfig(), path)
    out = tmp_path / "p.json"
    evsel_json("highlight", "--dump", str(path),
               "--granularity", "passage", "--out", str(out))
    import json
    prompt = json.loads(out.read_text())
    assert prompt["granularity"] == "passage"
    assert prompt["markers"]["txt_start"] in prompt["user_text"]


def test_whitespace_context_treated_as_absent(tmp_path):
    path = tmp_path / "ws.lotd"
    meta = dump_pass(IMAGE, QUESTION, "   \n  ", AdapterConfig(), path)
    assert meta["token_counts"]["context"] == 0
    assert evsel("select", str(path))[0] == 0


def test_empty_question_rejected(tmp_path):
    with pytest.raises(ValueError):
        dump_pass(IMAGE, "   ", CONTEXT, AdapterConfig(),
                  tmp_path / "x.lotd")


# --- layer coverage ---------------------------------------------------------

def test_default_core_layers_small():
    assert default_core_layers(4) == (1, 2, 3)


def test_default_core_layers_large():
    got = default_core_layers(32)
    assert got == tuple(sorted(set(range(8, 24)) | set(range(16, 32))))


def test_coverage_accepts_superset_and_all():
    AdapterConfig().check_coverage(4)                        # None = all
    AdapterConfig(capture_layers=(1, 2, 3)).check_coverage(4)
    AdapterConfig(capture_layers=(0, 2)).check_coverage(
        4, requested=(0, 2))                                 # explicit ranges


# --- text segmentation ------------------------------------------------------

def test_sentence_spans_skip_gaps():
    text = "One fish.  Two fish!  Red fish?"
    spans = sentence_char_spans(text)
    assert [text[a:b] for a, b in spans] == \
        ["One fish.", "Two fish!", "Red fish?"]


def test_sentence_spans_unterminated_tail():
    spans = sentence_char_spans("First part. trailing clause")
    assert len(spans) == 2
    assert spans[1][1] == len("First part. trailing clause")


def test_passage_spans_none_for_single_block():
    assert passage_char_spans("just one paragraph here") is None
    got = passage_char_spans("alpha\n\nbeta")
    assert got == [(0, 5), (7, 11)]


def test_token_grouping_tiles_context():
    model = FakeModel()
    text = "One fish. Two fish! Red fish?"
    offsets = model.tokenize(text)
    spans, kept = group_tokens_by_sentence(
        offsets, sentence_char_spans(text), base=10)
    assert kept == [0, 1, 2]
    assert spans[0][0] == 10
    assert spans[-1][1] == 10 + len(offsets)
    for (_, b), (a, _) in zip(spans, spans[1:]):
        assert a == b


def test_object_tokens_last_content_run():
    from lotd_adapter.segmentation import object_token_indices
    model = FakeModel()
    q = "What is the name of the tall stone tower?"
    offsets = model.tokenize(q)
    idx = object_token_indices(q, offsets)
    assert [q[a:b] for a, b in (offsets[i] for i in idx)] == \
        ["tall", "stone", "tower"]
