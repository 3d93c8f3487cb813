"""Instrumented single-panel renderer.

Every element is placed by explicit layout arithmetic, so its annotation is
read straight from the layout instead of being detected afterwards.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np

from ..core import BBox, ElementAnnotation, Point, RasterImage, round_half_away, sequence_bbox
from ..draw import Canvas
from ..font import GLYPH_H, text_mask, text_size
from .spec import ChartSpec

BLACK = (0, 0, 0)
WHITE = (255, 255, 255)
MARGIN = 8
TICK_LEN = 4
LINE_WIDTH = 2
MARKER_RADIUS = 3.0
SWATCH_W, SWATCH_H = 14, 8
LEGEND_PAD = 4
LEGEND_ROW = 12
MIN_AXES = 40


class CanvasTooSmall(ValueError):
    """The requested text and axes do not fit on the canvas."""


@dataclass(frozen=True)
class AxisMap:
    axis: Literal["x", "y"]
    value_range: tuple[float, float]
    pixel_range: tuple[float, float]

    def __post_init__(self) -> None:
        v0, v1 = self.value_range
        if not v0 < v1:
            raise ValueError(f"value range must be increasing: {self.value_range}")
        if self.pixel_range[0] == self.pixel_range[1]:
            raise ValueError("pixel range must be non-degenerate")


def value_to_pixel(axis_map: AxisMap, value: float) -> float:
    """Affine map from data value to pixel coordinate; extrapolates freely."""
    v0, v1 = axis_map.value_range
    p0, p1 = axis_map.pixel_range
    return p0 + (value - v0) / (v1 - v0) * (p1 - p0)


def format_tick(v: float) -> str:
    if float(v).is_integer():
        return str(int(v))
    return f"{v:g}"


@dataclass(frozen=True, eq=False)
class RenderedChart:
    image: RasterImage
    annotations: tuple[ElementAnnotation, ...]
    axis_maps: tuple[AxisMap, AxisMap]
    # ground truth only: visible pixels of each series, keyed by series name
    series_masks: dict[str, np.ndarray]
    plot_area: BBox

    def __iter__(self):
        yield self.image
        yield self.annotations
        yield self.axis_maps

    def axis_map(self, axis: str) -> AxisMap:
        return self.axis_maps[0] if axis == "x" else self.axis_maps[1]


@dataclass(frozen=True)
class _Layout:
    left: int
    top: int
    right: int
    bottom: int
    title_scale: int
    legend_box: tuple[int, int, int, int]


def _legend_size(spec: ChartSpec, horizontal: bool) -> tuple[int, int]:
    widths = [SWATCH_W + 4 + text_size(s.name)[0] for s in spec.series]
    if horizontal:
        w = sum(widths) + 10 * (len(widths) - 1) + 2 * LEGEND_PAD + 2
        h = SWATCH_H + 2 * LEGEND_PAD + 2
    else:
        w = max(widths) + 2 * LEGEND_PAD + 2
        h = len(widths) * LEGEND_ROW - (LEGEND_ROW - SWATCH_H) + 2 * LEGEND_PAD + 2
    return w, h


def _layout(spec: ChartSpec) -> _Layout:
    W, H = spec.canvas
    title_scale = 2
    if text_size(spec.title, 2)[0] > W - 2 * MARGIN:
        title_scale = 1
    if text_size(spec.title, 1)[0] > W - 2 * MARGIN:
        raise CanvasTooSmall(f"title {spec.title!r} does not fit in {W}px")
    title_h = GLYPH_H * title_scale

    ytick_w = max(text_size(format_tick(v))[0] for v in spec.y_ticks)
    last_x_half = text_size(format_tick(spec.x_ticks[-1]))[0] // 2 + 1
    pos = spec.legend_position
    lw, lh = _legend_size(spec, horizontal=pos == "below_axes")

    left = MARGIN + GLYPH_H + 6 + ytick_w + 4 + TICK_LEN
    top = MARGIN + title_h + 10
    right = W - MARGIN - last_x_half - 1
    if pos == "right_of_axes":
        right = W - MARGIN - lw - 12
    bottom = H - MARGIN - GLYPH_H - 6 - GLYPH_H - 3 - TICK_LEN - 1
    if pos == "below_axes":
        bottom -= lh + 8

    if right - left < MIN_AXES or bottom - top < MIN_AXES:
        raise CanvasTooSmall(f"axes area {right - left}x{bottom - top} too small on {W}x{H} canvas")
    if lw > W - 2 * MARGIN or (pos == "inside_top_right" and (lw > right - left - 12 or lh > bottom - top - 12)):
        raise CanvasTooSmall("legend does not fit")
    if text_size(spec.x_label)[0] > W - 2 * MARGIN or text_size(spec.y_label)[0] > H - 2 * MARGIN:
        raise CanvasTooSmall("axis label does not fit")

    if pos == "right_of_axes":
        lx, ly = right + 12, top
    elif pos == "below_axes":
        lx, ly = (left + right - lw) // 2, H - MARGIN - lh
        lx = max(MARGIN, lx)
    else:
        lx, ly = right - 6 - lw, top + 6
    return _Layout(left, top, right, bottom, title_scale, (lx, ly, lx + lw, ly + lh))


def render_chart(spec: ChartSpec) -> RenderedChart:
    """Rasterize ``spec`` and return the image with exact element annotations."""
    W, H = spec.canvas
    lay = _layout(spec)
    cv = Canvas.new(W, H, WHITE, track_owner=True)
    xmap = AxisMap("x", (spec.x_ticks[0], spec.x_ticks[-1]), (float(lay.left), float(lay.right)))
    ymap = AxisMap("y", (spec.y_ticks[0], spec.y_ticks[-1]), (float(lay.bottom), float(lay.top)))
    interior = (lay.left + 1, lay.top + 1, lay.right, lay.bottom)

    _draw_series(cv, spec, xmap, ymap, interior)

    # frame and ticks
    cv.rect_outline(lay.left, lay.top, lay.right + 1, lay.bottom + 1, BLACK)
    anns: list[ElementAnnotation] = []
    pieces: list[BBox] = [BBox(lay.left, lay.top, lay.right + 1, lay.bottom + 1)]
    for i, v in enumerate(spec.x_ticks):
        px = value_to_pixel(xmap, v)
        col = round_half_away(px)
        cv.fill_rect(col, lay.bottom + 1, col + 1, lay.bottom + 1 + TICK_LEN, BLACK)
        label = format_tick(v)
        tw, _ = text_size(label)
        ext = cv.text(col - tw // 2, lay.bottom + TICK_LEN + 3, label)
        if ext:
            pieces.append(BBox(*ext))
        anns.append(
            ElementAnnotation(f"x_tick:{i}", "axis_tick", point=Point(px, float(lay.bottom)), label_text=label, axis_value=float(v))
        )
    for i, v in enumerate(spec.y_ticks):
        py = value_to_pixel(ymap, v)
        row = round_half_away(py)
        cv.fill_rect(lay.left - TICK_LEN, row, lay.left, row + 1, BLACK)
        label = format_tick(v)
        tw, th = text_size(label)
        ext = cv.text(lay.left - TICK_LEN - 3 - tw, row - th // 2, label)
        if ext:
            pieces.append(BBox(*ext))
        anns.append(
            ElementAnnotation(f"y_tick:{i}", "axis_tick", point=Point(float(lay.left), py), label_text=label, axis_value=float(v))
        )
    pieces.append(BBox(lay.left - TICK_LEN, lay.top, lay.right + 1, lay.bottom + 1 + TICK_LEN))

    # text labels
    text_anns = []
    tw, _ = text_size(spec.title, lay.title_scale)
    ext = cv.text((W - tw) // 2, MARGIN, spec.title, scale=lay.title_scale)
    text_anns.append(("title", spec.title, ext))
    xw, _ = text_size(spec.x_label)
    x_label_y = lay.bottom + TICK_LEN + 3 + GLYPH_H + 6
    ext = cv.text((lay.left + lay.right - xw) // 2, x_label_y, spec.x_label)
    text_anns.append(("x_label", spec.x_label, ext))
    rot = np.rot90(text_mask(spec.y_label))
    ext = cv.blit_mask(MARGIN, max(0, (lay.top + lay.bottom - rot.shape[0]) // 2), rot, BLACK)
    text_anns.append(("y_label", spec.y_label, ext))
    for eid, text, ext in text_anns:
        if ext is None:
            continue
        box = BBox(*ext)
        pieces.append(box)
        anns.append(ElementAnnotation(eid, "text_label", bbox=box, label_text=text))

    # legend
    lx1, ly1, lx2, ly2 = lay.legend_box
    cv.fill_rect(lx1, ly1, lx2, ly2, WHITE)
    cv.rect_outline(lx1, ly1, lx2, ly2, BLACK)
    legend_box = BBox(lx1, ly1, lx2, ly2)
    anns.append(ElementAnnotation("legend", "legend_region", bbox=legend_box))
    x, y = lx1 + 1 + LEGEND_PAD, ly1 + 1 + LEGEND_PAD
    for s in spec.series:
        cv.fill_rect(x, y, x + SWATCH_W, y + SWATCH_H, s.color.as_tuple())
        anns.append(
            ElementAnnotation(f"legend_item:{s.name}", "legend_region", bbox=BBox(x, y, x + SWATCH_W, y + SWATCH_H), label_text=s.name)
        )
        cv.text(x + SWATCH_W + 4, y + (SWATCH_H - GLYPH_H) // 2, s.name)
        if spec.legend_position == "below_axes":
            x += SWATCH_W + 4 + text_size(s.name)[0] + 10
        else:
            y += LEGEND_ROW
    if spec.legend_position == "inside_top_right":
        pieces.append(legend_box)

    subplot = sequence_bbox(pieces).clamp(W, H)
    anns.insert(0, ElementAnnotation("subplot", "subplot", bbox=subplot))

    masks = {}
    for k, s in enumerate(spec.series):
        m = (cv.owner == k) & np.all(cv.arr == np.array(s.color.as_tuple(), dtype=np.uint8), axis=2)
        masks[s.name] = m
    return RenderedChart(
        image=cv.freeze(),
        annotations=tuple(anns),
        axis_maps=(xmap, ymap),
        series_masks=masks,
        plot_area=BBox(lay.left, lay.top, lay.right + 1, lay.bottom + 1),
    )


def _draw_series(cv: Canvas, spec: ChartSpec, xmap: AxisMap, ymap: AxisMap, clip) -> None:
    n = len(spec.series)
    if spec.chart_kind == "bar":
        spacing = abs(value_to_pixel(xmap, spec.x_ticks[1]) - value_to_pixel(xmap, spec.x_ticks[0]))
        group_w = max(n, int(spacing * 0.8))
        bar_w = max(1, group_w // n)
        base_v = max(spec.y_ticks[0], min(0.0, spec.y_ticks[-1]))
        base = round_half_away(value_to_pixel(ymap, base_v))
    for k, s in enumerate(spec.series):
        color = s.color.as_tuple()
        pts = [(value_to_pixel(xmap, x), value_to_pixel(ymap, y)) for x, y in s.points]
        if spec.chart_kind == "line":
            for (x0, y0), (x1, y1) in zip(pts, pts[1:]):
                cv.stroke(x0, y0, x1, y1, color, thickness=LINE_WIDTH, owner=k, clip=clip)
        elif spec.chart_kind == "scatter":
            for x, y in pts:
                cv.disc(x, y, MARKER_RADIUS, color, owner=k, clip=clip)
        else:
            for x, y in pts:
                x_left = round_half_away(x) - group_w // 2 + k * bar_w
                top = round_half_away(y)
                cv.fill_rect(x_left, min(top, base), x_left + bar_w, max(top, base) + 1, color, owner=k, clip=clip)


def fits(spec: ChartSpec) -> bool:
    try:
        _layout(spec)
    except CanvasTooSmall:
        return False
    return True


def tick_pixels(chart: RenderedChart, axis: str) -> list[tuple[float, float]]:
    """(value, pixel) pairs for the annotated ticks of one axis."""
    out = []
    for a in chart.annotations:
        if a.category == "axis_tick" and a.axis == axis:
            out.append((a.axis_value, a.point.x if axis == "x" else a.point.y))
    return out
