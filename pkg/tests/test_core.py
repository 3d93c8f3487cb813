from __future__ import annotations

import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from structimg.core import (
    AnnotationError,
    BBox,
    ColorRGB,
    ElementAnnotation,
    Point,
    RasterImage,
    bbox_iou,
    color_distance,
    load_png,
    pck_hit,
    read_annotations,
    round_half_away,
    save_png,
    write_annotations,
)


def pixel_iou(a: tuple[int, ...], b: tuple[int, ...], n: int) -> float:
    """Reference IoU by painting both boxes on an n x n grid and counting cells."""
    ga = np.zeros((n, n), bool)
    gb = np.zeros((n, n), bool)
    ga[a[1] : a[3], a[0] : a[2]] = True
    gb[b[1] : b[3], b[0] : b[2]] = True
    union = (ga | gb).sum()
    if union == 0:
        return 1.0 if a == b else 0.0
    return (ga & gb).sum() / union


def int_box(n: int):
    return st.tuples(st.integers(0, n), st.integers(0, n), st.integers(0, n), st.integers(0, n)).map(
        lambda t: (min(t[0], t[2]), min(t[1], t[3]), max(t[0], t[2]), max(t[1], t[3]))
    )


finite = st.floats(-1e4, 1e4, allow_nan=False)
boxes = st.tuples(finite, finite, finite, finite).map(lambda t: BBox.from_points(*t))
colors = st.builds(ColorRGB, st.integers(0, 255), st.integers(0, 255), st.integers(0, 255))


class TestIoU:
    def test_examples(self):
        assert bbox_iou(BBox(0, 0, 10, 10), BBox(0, 0, 10, 10)) == 1.0
        assert bbox_iou(BBox(0, 0, 10, 10), BBox(20, 20, 30, 30)) == 0.0
        assert bbox_iou(BBox(0, 0, 10, 10), BBox(5, 5, 15, 15)) == pytest.approx(25 / 175, abs=1e-12)

    def test_example_matches_pixel_count(self):
        assert pixel_iou((0, 0, 10, 10), (5, 5, 15, 15), 30) == pytest.approx(25 / 175, abs=1e-12)

    def test_degenerate(self):
        p = BBox(3, 3, 3, 3)
        assert bbox_iou(p, p) == 1.0
        assert bbox_iou(p, BBox(4, 4, 4, 4)) == 0.0
        assert bbox_iou(p, BBox(0, 0, 10, 10)) == 0.0
        assert bbox_iou(BBox(0, 0, 0, 10), BBox(0, 0, 0, 10)) == 1.0

    @given(int_box(50), int_box(50))
    def test_matches_pixel_oracle(self, a, b):
        assert abs(bbox_iou(BBox(*a), BBox(*b)) - pixel_iou(a, b, 50)) < 1e-12

    @given(boxes, boxes)
    def test_symmetric_and_bounded(self, a, b):
        v = bbox_iou(a, b)
        assert 0.0 <= v <= 1.0
        assert v == bbox_iou(b, a)

    @given(boxes, boxes)
    def test_one_only_for_identical(self, a, b):
        if bbox_iou(a, b) >= 1 - 1e-9:
            for u, v in zip(a.to_list(), b.to_list()):
                assert u == pytest.approx(v, rel=1e-6, abs=1e-6)


class TestPck:
    def test_examples(self):
        gt = Point(100, 100)
        assert pck_hit(gt, gt, 1000, 800)
        assert pck_hit(Point(109, 100), gt, 1000, 800)
        assert not pck_hit(Point(110.5, 100), gt, 1000, 800)

    def test_boundary_inclusive(self):
        assert pck_hit(Point(6, 8), Point(0, 0), 1000, 800)
        assert not pck_hit(Point(6, 8.01), Point(0, 0), 1000, 800)

    @given(finite, finite, finite, finite, finite, finite, st.integers(1, 4000), st.integers(1, 4000))
    def test_translation_invariant(self, px, py, gx, gy, dx, dy, w, h):
        # integer-valued coordinates keep the translated distance exact
        p, g = Point(round(px), round(py)), Point(round(gx), round(gy))
        dx, dy = round(dx), round(dy)
        assert pck_hit(p, g, w, h) == pck_hit(p.translate(dx, dy), g.translate(dx, dy), w, h)


class TestColor:
    def test_examples(self):
        assert color_distance(ColorRGB(0, 0, 0), ColorRGB(0, 0, 0)) == 0
        assert color_distance(ColorRGB(255, 0, 0), ColorRGB(0, 0, 0)) == 255
        assert color_distance(ColorRGB(10, 20, 30), ColorRGB(13, 24, 30)) == 5

    @given(colors, colors, colors)
    def test_metric(self, a, b, c):
        assert color_distance(a, b) == color_distance(b, a)
        assert (color_distance(a, b) == 0) == (a == b)
        assert color_distance(a, c) <= color_distance(a, b) + color_distance(b, c) + 1e-9

    def test_channel_range(self):
        with pytest.raises(ValueError):
            ColorRGB(256, 0, 0)
        with pytest.raises(ValueError):
            ColorRGB(-1, 0, 0)


class TestTypes:
    def test_round_half_away(self):
        assert [round_half_away(v) for v in (0.5, 1.5, 2.5, -0.5, -1.5, 0.49)] == [1, 2, 3, -1, -2, 0]

    def test_bbox_invariants(self):
        with pytest.raises(ValueError):
            BBox(5, 0, 1, 1)
        with pytest.raises(ValueError):
            Point(math.nan, 0)
        assert BBox(0, 0, 4, 5).area == 20

    def test_raster_is_immutable_copy(self):
        arr = np.zeros((3, 4, 3), np.uint8)
        img = RasterImage(arr)
        arr[:] = 9
        assert img.pixels.max() == 0
        assert (img.width, img.height) == (4, 3)
        with pytest.raises(ValueError):
            img.pixels[0, 0, 0] = 1
        with pytest.raises(ValueError):
            RasterImage(np.zeros((0, 4, 3), np.uint8))

    def test_png_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        img = RasterImage(rng.integers(0, 256, (7, 9, 3), dtype=np.uint8))
        path = save_png(img, tmp_path / "a.png")
        back = load_png(path)
        assert back.digest == img.digest
        assert img.to_png_bytes() == back.to_png_bytes()

    def test_annotation_category_rules(self):
        ElementAnnotation("title", "text_label", bbox=BBox(0, 0, 1, 1), label_text="T")
        ElementAnnotation("x_tick:0", "axis_tick", point=Point(1, 2), axis_value=0.0)
        with pytest.raises(AnnotationError):
            ElementAnnotation("title", "text_label", point=Point(0, 0))
        with pytest.raises(AnnotationError):
            ElementAnnotation("x", "axis_tick", bbox=BBox(0, 0, 1, 1))
        with pytest.raises(AnnotationError):
            ElementAnnotation("legend", "legend_region", bbox=BBox(0, 0, 1, 1), grid_pos=(1, 1))

    def test_annotation_jsonl_round_trip(self, tmp_path):
        anns = [
            ElementAnnotation("p0/subplot", "subplot", bbox=BBox(1, 2, 30, 40), grid_pos=(1, 2)),
            ElementAnnotation("p0/x_tick:0", "axis_tick", point=Point(3.5, 4), axis_value=2.5),
        ]
        path = write_annotations(anns, tmp_path / "a.jsonl")
        rows = [json.loads(line) for line in path.read_text().splitlines()]
        assert rows[0]["bbox"] == [1, 2, 30, 40] and rows[0]["grid_pos"] == [1, 2]
        assert rows[1]["point"] == [3.5, 4]
        assert read_annotations(path) == anns
