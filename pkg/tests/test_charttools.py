from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from structimg.charttools import (
    RULER_MARGIN,
    AmbiguousColor,
    DegenerateRegion,
    EmptyAfterFiltering,
    EmptyWindow,
    add_auxiliary_line,
    crop_subfigure,
    dominant_color,
    interpolate_tick_pixel,
    legend_mask,
    magnify_region,
    mask_by_legend,
    scale_nearest,
)
from structimg.chartgen import synth_single
from structimg.core import BBox, ColorRGB, ElementAnnotation, Point, RasterImage
from structimg.grounding import GroundingRequest, OracleGrounder
from structimg.toolkit import GroundingMiss


def tick(axis: str, i: int, value: float, x: float, y: float) -> ElementAnnotation:
    return ElementAnnotation(f"{axis}_tick:{i}", "axis_tick", point=Point(x, y), label_text=str(value), axis_value=value)


def ruled_image() -> tuple[RasterImage, OracleGrounder]:
    """600x300 canvas with x ticks 0/10 at px 50/450 and y ticks 0/10/20 at px 250/200/100."""
    img = RasterImage.blank(600, 300)
    anns = [
        ElementAnnotation("subplot", "subplot", bbox=BBox(40, 20, 470, 270)),
        tick("x", 0, 0, 50, 260),
        tick("x", 1, 10, 450, 260),
        tick("y", 0, 0, 45, 250),
        tick("y", 1, 10, 45, 200),
        tick("y", 2, 20, 45, 100),
    ]
    return img, OracleGrounder.from_annotations(img, anns)


def noisy(w: int = 40, h: int = 30, seed: int = 0) -> RasterImage:
    return RasterImage(np.random.default_rng(seed).integers(0, 256, (h, w, 3), dtype=np.uint8))


class TestCrop:
    def test_composite_cell(self, composite, composite_oracle):
        image, anns = composite
        before = image.pixels.tobytes()
        out = crop_subfigure(image, "subplot at row 1, column 1", composite_oracle)
        box = next(a.bbox for a in anns if a.grid_pos == (1, 1))
        x1, y1, x2, y2 = box.pixel_rect()
        want_w = min(image.width, x2 + 2) - max(0, x1 - 2)
        want_h = min(image.height, y2 + 2) - max(0, y1 - 2)
        assert (out.image.width, out.image.height) == (want_w, want_h)
        assert not out.data["legend_stacked"]
        assert image.pixels.tobytes() == before
        assert [c["prompt"] for c in out.provenance["grounding"]][0] == "subplot at row 1, column 1"

    def test_identity_crop(self, chart, chart_oracle):
        full = ElementAnnotation("subplot", "subplot", bbox=BBox(0, 0, chart.image.width, chart.image.height))
        g = OracleGrounder.from_annotations(chart.image, [full])
        out = crop_subfigure(chart.image, "the subplot", g)
        assert np.array_equal(out.image.pixels, chart.image.pixels)

    def test_separate_legend_is_stacked(self):
        img = noisy(100, 100)
        anns = [
            ElementAnnotation("subplot", "subplot", bbox=BBox(10, 10, 50, 50)),
            ElementAnnotation("legend", "legend_region", bbox=BBox(60, 60, 80, 70)),
        ]
        out = crop_subfigure(img, "the subplot", OracleGrounder.from_annotations(img, anns))
        assert out.data["legend_stacked"]
        assert out.image.height == (40 + 4) + (10 + 4) + 4
        assert out.image.width == 44
        assert np.array_equal(out.image.pixels[:44, :44], img.pixels[8:52, 8:52])
        assert np.array_equal(out.image.pixels[48:62, :24], img.pixels[58:72, 58:82])
        assert (out.image.pixels[44:48] == 255).all()

    def test_errors(self, composite, composite_oracle):
        image, _ = composite
        with pytest.raises(GroundingMiss):
            crop_subfigure(image, "subplot at row 9, column 9", composite_oracle)
        tiny = noisy(20, 20)
        g = OracleGrounder.from_annotations(tiny, [ElementAnnotation("subplot", "subplot", bbox=BBox(2, 2, 4, 9))])
        with pytest.raises(DegenerateRegion):
            crop_subfigure(tiny, "the subplot", g)
        with pytest.raises(DegenerateRegion):
            crop_subfigure(noisy(7, 7), "the subplot", g)

    @settings(max_examples=40)
    @given(st.integers(0, 60), st.integers(0, 40), st.integers(4, 80), st.integers(4, 60))
    def test_crop_containment(self, x, y, w, h):
        img = noisy(64, 48)
        g = OracleGrounder.from_annotations(img, [ElementAnnotation("subplot", "subplot", bbox=BBox(x, y, x + w, y + h))])
        try:
            out = crop_subfigure(img, "the subplot", g)
        except DegenerateRegion:
            return
        x1, y1, x2, y2 = out.data["crop_rect"]
        assert 0 <= x1 < x2 <= 64 and 0 <= y1 < y2 <= 48
        assert np.array_equal(out.image.pixels, img.pixels[y1:y2, x1:x2])

    def test_crop_inherits_ground_truth(self, composite, composite_oracle):
        image, anns = composite
        out = crop_subfigure(image, "subplot at row 2, column 1", composite_oracle)
        x1, y1 = out.data["crop_rect"][:2]
        panel = next(a.panel for a in anns if a.grid_pos == (2, 1))
        src = next(a for a in anns if a.panel == panel and a.category == "axis_tick" and a.axis == "x")
        res = composite_oracle.locate(out.image, GroundingRequest(out.image, f"the tick {src.label_text} on the x axis"))
        assert res.point == src.point.translate(-x1, -y1)


class TestMagnify:
    def test_output_width_from_tick_pixels(self):
        img, g = ruled_image()
        out = magnify_region(img, {"x": (0, 10)}, g, scale=2)
        assert out.image.width == 2 * (450 - 50 + 2 * RULER_MARGIN)
        assert out.image.height == 2 * (270 - 20)
        assert out.data["region"] == [50 - RULER_MARGIN, 20, 450 + RULER_MARGIN, 270]

    def test_scale_one_full_window_contains_plot(self, chart, chart_oracle):
        xs = sorted(a.axis_value for a in chart.annotations if a.category == "axis_tick" and a.axis == "x")
        ys = sorted(a.axis_value for a in chart.annotations if a.category == "axis_tick" and a.axis == "y")
        out = magnify_region(chart.image, {"x": (xs[0], xs[-1]), "y": (ys[0], ys[-1])}, chart_oracle, scale=1)
        x1, y1, x2, y2 = out.data["region"]
        pa = chart.plot_area
        assert x1 <= pa.x1 and y1 <= pa.y1 and pa.x2 <= x2 and pa.y2 <= y2
        assert np.array_equal(out.image.pixels, chart.image.pixels[y1:y2, x1:x2])

    def test_errors(self):
        img, g = ruled_image()
        with pytest.raises(EmptyWindow):
            magnify_region(img, {"x": (10, 10)}, g)
        with pytest.raises(GroundingMiss):
            magnify_region(img, {"x": (0, 7)}, g)

    @given(st.integers(1, 30), st.integers(1, 30), st.floats(1, 4.5))
    def test_scale_law(self, w, h, s):
        arr = noisy(w, h).pixels
        out = scale_nearest(arr, s)
        assert out.shape[:2] == (math.ceil(h * s), math.ceil(w * s))
        assert set(map(tuple, out.reshape(-1, 3))) <= set(map(tuple, arr.reshape(-1, 3)))

    def test_integer_scale_replicates(self):
        arr = noisy(3, 2).pixels
        assert np.array_equal(scale_nearest(arr, 2), arr.repeat(2, 0).repeat(2, 1))


class TestAuxLine:
    def test_exact_tick(self):
        img, g = ruled_image()
        out = add_auxiliary_line(img, "y", 10, g)
        assert out.data["drawn_index"] == 200
        assert tuple(out.image.pixels[200, 0]) == (255, 0, 0)

    def test_midpoint(self):
        img, g = ruled_image()
        out = add_auxiliary_line(img, "y", 15, g, ticks=[0, 10, 20])
        assert abs(out.data["drawn_index"] - 150) <= 1
        assert out.data["pixel"] == 150

    def test_vertical(self):
        img, g = ruled_image()
        out = add_auxiliary_line(img, "x", 5, g, ticks=[0, 10])
        assert out.data["drawn_index"] == 250
        diff = np.argwhere((out.image.pixels != img.pixels).any(axis=-1))
        assert set(diff[:, 1]) == {250}

    @settings(max_examples=40)
    @given(st.floats(-1, 21), st.sampled_from(["x", "y"]))
    def test_locality(self, value, axis):
        img, g = ruled_image()
        img = RasterImage(noisy(600, 300, 1).pixels)
        g = OracleGrounder.from_annotations(img, g.annotations_for(ruled_image()[0]))
        ticks = [0, 10, 20] if axis == "y" else [0, 10]
        try:
            out = add_auxiliary_line(img, axis, value, g, ticks=ticks)
        except GroundingMiss:
            return
        before = img.pixels.tobytes()
        idx = out.data["drawn_index"]
        changed = (out.image.pixels != img.pixels).any(axis=-1)
        band = np.zeros_like(changed)
        if axis == "y":
            band[idx, :] = True
            lit = np.arange(600) % 10 < 6
            assert (out.image.pixels[idx, lit] == (255, 0, 0)).all()
            assert np.array_equal(out.image.pixels[idx, ~lit], img.pixels[idx, ~lit])
        else:
            band[:, idx] = True
        assert not (changed & ~band).any()
        assert img.pixels.tobytes() == before

    def test_needs_two_ticks(self):
        img, g = ruled_image()
        with pytest.raises(GroundingMiss):
            add_auxiliary_line(img, "y", 5, g, ticks=[0, 7])
        with pytest.raises(GroundingMiss):
            add_auxiliary_line(img, "y", 5, g)

    def test_interpolation_rules(self):
        ticks = [(0.0, 250.0), (10.0, 200.0), (20.0, 100.0)]
        assert interpolate_tick_pixel(5, ticks) == 225
        assert interpolate_tick_pixel(22, ticks) == 80
        with pytest.raises(GroundingMiss):
            interpolate_tick_pixel(22.5, ticks)
        with pytest.raises(GroundingMiss):
            interpolate_tick_pixel(-2.5, ticks)


class TestDominantColor:
    def test_examples(self):
        red = RasterImage.blank(10, 10, (255, 0, 0))
        assert dominant_color(red, BBox(0, 0, 10, 10)) == ColorRGB(255, 0, 0)
        arr = np.zeros((10, 10, 3), np.uint8)
        arr[:6] = (0, 0, 255)
        arr[6:] = (0, 200, 0)
        assert dominant_color(RasterImage(arr), BBox(0, 0, 10, 10)) == ColorRGB(0, 0, 255)
        arr = np.full((10, 10, 3), 255, np.uint8)
        arr.reshape(-1, 3)[:30] = (255, 0, 0)
        assert dominant_color(RasterImage(arr), BBox(0, 0, 10, 10)) == ColorRGB(255, 0, 0)

    def test_tie_goes_to_lowest_packed(self):
        arr = np.zeros((2, 2, 3), np.uint8)
        arr[0] = (0, 200, 0)
        arr[1] = (0, 0, 200)
        assert dominant_color(RasterImage(arr), BBox(0, 0, 2, 2)) == ColorRGB(0, 0, 200)

    def test_empty(self):
        with pytest.raises(EmptyAfterFiltering):
            dominant_color(RasterImage.blank(5, 5), BBox(0, 0, 5, 5))
        with pytest.raises(EmptyAfterFiltering):
            dominant_color(RasterImage.blank(5, 5, (0, 0, 0)), BBox(0, 0, 5, 5))


def precision_recall(mask: np.ndarray, truth: np.ndarray) -> tuple[float, float]:
    tp = (mask & truth).sum()
    return tp / max(1, mask.sum()), tp / max(1, truth.sum())


class TestMask:
    def test_remove_series(self, chart, chart_oracle):
        a, b = list(chart.series_masks)
        out = mask_by_legend(chart.image, b, "remove", chart_oracle)
        white = (out.image.pixels == 255).all(axis=-1)
        gt_b, gt_a = chart.series_masks[b], chart.series_masks[a]
        assert white[gt_b].mean() >= 0.95
        same = (out.image.pixels == chart.image.pixels).all(axis=-1)
        assert same[gt_a].mean() >= 0.95

    def test_keep_only_single_series(self):
        chart = synth_single(11, 2)
        assert len(chart.series_masks) == 1
        g = OracleGrounder.from_annotations(chart.image, chart.annotations)
        (name,) = chart.series_masks
        out = mask_by_legend(chart.image, name, "keep_only", g)
        x1, y1, x2, y2 = chart.plot_area.pixel_rect()
        diff = (out.image.pixels != chart.image.pixels).any(axis=-1)
        stroke = chart.series_masks[name]
        border = np.zeros_like(stroke)
        for dy in (-1, 0, 1):
            for dx in (-1, 0, 1):
                border |= np.roll(np.roll(stroke, dy, 0), dx, 1)
        assert not (diff[y1:y2, x1:x2] & ~border[y1:y2, x1:x2]).any()

    def test_outside_plot_untouched(self, chart, chart_oracle):
        a, _ = list(chart.series_masks)
        out = mask_by_legend(chart.image, a, "keep_only", chart_oracle)
        x1, y1, x2, y2 = chart.plot_area.pixel_rect()
        outside = np.ones(chart.image.pixels.shape[:2], bool)
        outside[y1:y2, x1:x2] = False
        assert np.array_equal(out.image.pixels[outside], chart.image.pixels[outside])

    def test_precision_recall(self, chart, chart_oracle):
        for name, truth in chart.series_masks.items():
            mask, _, _ = legend_mask(chart.image, name, chart_oracle)
            p, r = precision_recall(mask, truth)
            assert p >= 0.95 and r >= 0.95

    def test_missing_item(self, chart, chart_oracle):
        with pytest.raises(GroundingMiss):
            mask_by_legend(chart.image, "No Such Series", "remove", chart_oracle)

    def test_ambiguous_icon(self):
        arr = np.full((20, 20, 3), 255, np.uint8)
        rng = np.random.default_rng(2)
        arr[:10, :10] = rng.integers(60, 200, (10, 10, 3))
        img = RasterImage(arr)
        g = OracleGrounder.from_annotations(img, [ElementAnnotation("legend_item:S", "legend_region", bbox=BBox(0, 0, 10, 10), label_text="S")])
        with pytest.raises(AmbiguousColor):
            mask_by_legend(img, "S", "remove", g)

    def test_purity(self, chart, chart_oracle):
        before = chart.image.pixels.tobytes()
        for mode in ("remove", "keep_only"):
            out = mask_by_legend(chart.image, list(chart.series_masks)[0], mode, chart_oracle)
            assert out.image is not chart.image
        assert chart.image.pixels.tobytes() == before
