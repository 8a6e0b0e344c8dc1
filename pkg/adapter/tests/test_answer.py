"""Answer-pass behavior from engine-produced marked prompts."""

import copy

import pytest

from lotd_adapter import AdapterConfig, CaptureContractError, answer_pass

from conftest import IMAGE


def test_round_trip_without_leakage(prompt_json):
    record = answer_pass(prompt_json, IMAGE, AdapterConfig())
    assert record["schema"] == "adapter.answer/1"
    assert record["answer"]
    assert record["marker_leak"] is False
    for marker in prompt_json["markers"].values():
        assert marker not in record["answer"]
    # The fake quotes a word from inside the highlighted sentence.
    assert "heron" in record["answer"] or "perched" in record["answer"] \
        or "grey" in record["answer"] or "rail" in record["answer"]


def test_leaky_model_is_flagged(prompt_json):
    record = answer_pass(prompt_json, IMAGE,
                         AdapterConfig(model="fake-leaky"))
    assert record["marker_leak"] is True
    assert record["leaked_markers"]
    assert record["leaked_markers"][0] in record["answer"]


def test_answer_is_deterministic(prompt_json):
    a = answer_pass(prompt_json, IMAGE, AdapterConfig())
    b = answer_pass(prompt_json, IMAGE, AdapterConfig())
    assert a == b


def test_views_crop_only(prompt_json):
    record = answer_pass(prompt_json, IMAGE, AdapterConfig())
    assert not prompt_json["include_full_image"]
    assert [v["kind"] for v in record["views"]] == ["crop"]
    w, h = IMAGE.split("x")
    x1, y1, x2, y2 = record["crop_px"]
    assert 0 <= x1 < x2 <= int(w) and 0 <= y1 < y2 <= int(h)


def test_full_image_adds_a_view(prompt_json):
    prompt = copy.deepcopy(prompt_json)
    prompt["include_full_image"] = True
    prompt["crop_px"] = [40, 30, 200, 120]
    record = answer_pass(prompt, IMAGE, AdapterConfig())
    assert [v["kind"] for v in record["views"]] == ["full", "crop"]
    assert record["views"][1]["width_px"] == 160
    assert record["views"][1]["height_px"] == 90


def test_full_crop_suppresses_duplicate_view(prompt_json):
    prompt = copy.deepcopy(prompt_json)
    prompt["include_full_image"] = True
    prompt["crop_px"] = [0, 0, 320, 192]
    record = answer_pass(prompt, IMAGE, AdapterConfig())
    assert [v["kind"] for v in record["views"]] == ["full"]


def test_exemplars_extend_prompt_not_answer(prompt_json):
    plain = answer_pass(prompt_json, IMAGE, AdapterConfig())
    shot = answer_pass(prompt_json, IMAGE, AdapterConfig(n_exemplars=3))
    assert shot["token_counts"]["user"] > plain["token_counts"]["user"]
    assert shot["answer"] == plain["answer"]


def test_bad_schema_rejected(prompt_json):
    prompt = copy.deepcopy(prompt_json)
    prompt["schema"] = "evsel.prompt/999"
    with pytest.raises(CaptureContractError):
        answer_pass(prompt, IMAGE, AdapterConfig())


def test_missing_field_rejected(prompt_json):
    prompt = copy.deepcopy(prompt_json)
    del prompt["crop_px"]
    with pytest.raises(CaptureContractError):
        answer_pass(prompt, IMAGE, AdapterConfig())


def test_out_of_range_crop_is_clamped(prompt_json):
    prompt = copy.deepcopy(prompt_json)
    prompt["crop_px"] = [300, 180, 900, 900]
    record = answer_pass(prompt, IMAGE, AdapterConfig())
    view = record["views"][-1]
    assert (view["width_px"], view["height_px"]) == (20, 12)


def test_token_counts_cover_all_parts(prompt_json):
    record = answer_pass(prompt_json, IMAGE, AdapterConfig())
    counts = record["token_counts"]
    assert set(counts) == {"system", "user", "image", "answer"}
    assert all(v > 0 for v in counts.values())
