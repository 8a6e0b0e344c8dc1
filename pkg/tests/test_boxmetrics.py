"""Box agreement metrics: algebraic identities and worked examples."""

import pytest

from evsel import oracles
from evsel.boxmetrics import compare, summarize
from evsel.dumpio import ImageMeta
from evsel.errors import InvariantError
from evsel.prng import Stream

IMG = ImageMeta(width_px=100, height_px=100)


def random_box(rng, w, h):
    x1 = rng.floats() * (w - 1)
    y1 = rng.floats() * (h - 1)
    x2 = x1 + 0.5 + rng.floats() * (w - x1 - 0.5)
    y2 = y1 + 0.5 + rng.floats() * (h - y1 - 0.5)
    return (x1, y1, x2, y2)


def test_identical_boxes():
    c = compare((10, 20, 30, 40), (10, 20, 30, 40), IMG)
    assert c.iou == 1.0 and c.coverage == 1.0 and c.precision == 1.0
    assert c.center_distance == 0.0


def test_disjoint_boxes():
    c = compare((0, 0, 10, 10), (50, 50, 60, 60), IMG)
    assert c.iou == 0.0 and c.coverage == 0.0 and c.precision == 0.0
    assert c.center_distance > 0.0


def test_half_image_example():
    # pred = left half, gt = full 100x100 image
    c = compare((0, 0, 50, 100), (0, 0, 100, 100), IMG)
    assert c.iou == pytest.approx(0.5, abs=1e-9)
    assert c.coverage == pytest.approx(0.5, abs=1e-9)
    assert c.precision == pytest.approx(1.0, abs=1e-9)
    assert c.center_distance == pytest.approx(25 / 20000 ** 0.5, abs=1e-9)
    assert c.center_distance == pytest.approx(0.17678, abs=5e-6)


def test_matches_oracle_and_identities():
    rng = Stream(77)
    for _ in range(500):
        a = random_box(rng, 100, 80)
        b = random_box(rng, 100, 80)
        img = ImageMeta(width_px=100, height_px=80)
        c = compare(a, b, img)
        want = oracles.rect_metrics(a, b, 100, 80)
        assert c.iou == pytest.approx(want["iou"], abs=1e-12)
        assert c.coverage == pytest.approx(want["coverage"], abs=1e-12)
        assert c.precision == pytest.approx(want["precision"], abs=1e-12)
        assert c.center_distance == pytest.approx(want["center_distance"],
                                                  abs=1e-12)
        # iou is dominated by both ratios, and all live in [0, 1]
        assert c.iou <= min(c.coverage, c.precision) + 1e-12
        assert 0.0 <= c.iou <= 1.0
        assert 0.0 <= c.coverage <= 1.0 and 0.0 <= c.precision <= 1.0
        # swapping the boxes swaps coverage <-> precision
        sw = compare(b, a, img)
        assert sw.iou == pytest.approx(c.iou, abs=1e-12)
        assert sw.center_distance == pytest.approx(c.center_distance,
                                                   abs=1e-12)
        assert sw.coverage == pytest.approx(c.precision, abs=1e-12)
        assert sw.precision == pytest.approx(c.coverage, abs=1e-12)


def test_rejects_bad_boxes():
    with pytest.raises(InvariantError, match="degenerate"):
        compare((0, 0, 0, 10), (0, 0, 10, 10), IMG)
    with pytest.raises(InvariantError, match="degenerate"):
        compare((0, 0, 10, 10), (5, 9, 8, 2), IMG)
    with pytest.raises(InvariantError, match="non-finite"):
        compare((0, 0, float("inf"), 10), (0, 0, 10, 10), IMG)


def test_summarize_groups_by_strategy():
    a = compare((0, 0, 50, 100), (0, 0, 100, 100), IMG)
    b = compare((0, 0, 100, 100), (0, 0, 100, 100), IMG)
    out = summarize([("min_max", a), ("min_max", b),
                     ("morphological", a)])
    assert out["min_max"]["count"] == 2
    assert out["min_max"]["iou"] == pytest.approx(0.75)
    assert out["morphological"]["count"] == 1
    assert out["morphological"]["precision"] == pytest.approx(1.0)
    assert list(out) == ["min_max", "morphological"]
