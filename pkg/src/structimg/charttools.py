"""Chart tool agents: subfigure cropping, region magnification, auxiliary lines, legend masking.

Each tool grounds the elements it needs through a grounding backend, then
applies a plain raster operation. Inputs are never modified.
"""

from __future__ import annotations

import math
from typing import Literal, Sequence

import numpy as np

from .core import BBox, ColorRGB, ElementAnnotation, Point, RasterImage, round_half_away
from .grounding import GroundingBackend, register_derived
from .grounding.prompts import format_value, grid_from_prompt
from .toolkit import GroundingLog, GroundingMiss, ToolError, ToolOutput

CROP_PAD = 2
STACK_GAP = 4
RULER_MARGIN = 24
MASK_TAU = 30.0
FILTER_DIST = 40.0
MIN_ICON_SHARE = 0.2
EXTRAPOLATE_LIMIT = 0.10
DEFAULT_LINE_COLOR = (255, 0, 0)
DEFAULT_DASH = (6, 4)
WHITE = np.array([255, 255, 255], dtype=np.uint8)


class DegenerateRegion(ToolError):
    pass


class EmptyWindow(ToolError):
    pass


class AmbiguousColor(ToolError):
    pass


class EmptyAfterFiltering(ToolError):
    pass


def _pad_rect(box: BBox, pad: int, width: int, height: int) -> tuple[int, int, int, int]:
    x1, y1, x2, y2 = box.pixel_rect()
    return max(0, x1 - pad), max(0, y1 - pad), min(width, x2 + pad), min(height, y2 + pad)


def _rect_box(r: tuple[int, int, int, int]) -> BBox:
    return BBox(*r)


def _inside(a: ElementAnnotation, rect: BBox) -> bool:
    return rect.contains_box(a.bbox) if a.bbox is not None else rect.contains_point(a.point)


def _crop_mapper(rect: BBox, dx: float, dy: float):
    def mapper(a: ElementAnnotation) -> ElementAnnotation | None:
        return a.translate(dx, dy) if _inside(a, rect) else None

    return mapper


def _unpanel(anns: list[ElementAnnotation]) -> list[ElementAnnotation]:
    """A crop holding exactly one panel becomes a plain single-panel image."""
    panels = {a.panel for a in anns}
    if len(panels) != 1 or None in panels:
        return anns
    return [a.replace(element_id=a.local_id, grid_pos=None) for a in anns]


def crop_subfigure(image: RasterImage, target_desc: str, grounding: GroundingBackend, legend_desc: str | None = None) -> ToolOutput:
    """Crop the grounded subfigure, stacking a separately placed legend underneath."""
    if image.width < 8 or image.height < 8:
        raise DegenerateRegion("image smaller than 8x8")
    g = GroundingLog(grounding, image)
    box = g.box(target_desc)
    if box.width < 4 or box.height < 4:
        raise DegenerateRegion(f"grounded region {box.to_list()} is smaller than 4x4")
    rect = _pad_rect(box, CROP_PAD, image.width, image.height)
    x1, y1, x2, y2 = rect
    main = image.pixels[y1:y2, x1:x2]

    if legend_desc is None:
        pos = grid_from_prompt(target_desc)
        legend_desc = f"the legend of the subplot at row {pos[0]}, column {pos[1]}" if pos else "the legend"
    legend = g(legend_desc, "box")
    stacked = legend.outcome == "box" and legend.bbox.area > 0 and not box.contains_box(legend.bbox)

    parts = [(main, rect, 0)]
    if stacked:
        lrect = _pad_rect(legend.bbox, CROP_PAD, image.width, image.height)
        lx1, ly1, lx2, ly2 = lrect
        parts.append((image.pixels[ly1:ly2, lx1:lx2], lrect, main.shape[0] + STACK_GAP))
        out_w = max(p.shape[1] for p, _, _ in parts)
        out_h = parts[-1][2] + parts[-1][0].shape[0]
        arr = np.full((out_h, out_w, 3), 255, dtype=np.uint8)
        for p, _, oy in parts:
            arr[oy : oy + p.shape[0], : p.shape[1]] = p
    else:
        arr = main.copy()
    out = RasterImage(arr)

    def mapper(a: ElementAnnotation) -> ElementAnnotation | None:
        for _, r, oy in parts:
            rb = _rect_box(r)
            if _inside(a, rb):
                return a.translate(-r[0], -r[1] + oy)
        return None

    base = _derived_annotations(grounding, image, mapper)
    if base is not None:
        register_derived(grounding, out, image, lambda a: None, _unpanel(base))

    desc = f"cropped {target_desc.strip()}"
    if stacked:
        desc += " with its legend stacked below"
    return ToolOutput(out, desc, g.provenance("crop_subfigure", target_desc=target_desc), {"crop_rect": list(rect), "legend_stacked": stacked})


def _derived_annotations(grounding, image, mapper) -> list[ElementAnnotation] | None:
    lookup = getattr(grounding, "annotations_for", None)
    if lookup is None:
        inner = getattr(grounding, "inner", None)
        return _derived_annotations(inner, image, mapper) if inner is not None else None
    anns = lookup(image)
    if anns is None:
        return None
    return [m for m in (mapper(a) for a in anns) if m is not None]


def _tick_prompt(axis: str, value: float) -> str:
    return f"the tick {format_value(value)} on the {axis} axis"


def magnify_region(
    image: RasterImage,
    axis_window: dict[str, tuple[float, float]],
    grounding: GroundingBackend,
    scale: float = 2.0,
    margin: int = RULER_MARGIN,
) -> ToolOutput:
    """Crop the region spanned by tick values (plus the ruler strip) and scale it up."""
    if scale < 1:
        raise ValueError("scale must be >= 1")
    window = {k: v for k, v in axis_window.items() if v is not None}
    if not window or set(window) - {"x", "y"}:
        raise ValueError("axis_window needs an 'x' and/or 'y' range")
    for axis, (a, b) in window.items():
        if a == b:
            raise EmptyWindow(f"{axis} window ({a}, {b}) is empty")
    g = GroundingLog(grounding, image)
    spans: dict[str, tuple[float, float]] = {}
    for axis, (a, b) in window.items():
        pa = g.point(_tick_prompt(axis, a))
        pb = g.point(_tick_prompt(axis, b))
        ca, cb = (pa.x, pb.x) if axis == "x" else (pa.y, pb.y)
        spans[axis] = (min(ca, cb) - margin, max(ca, cb) + margin)
    if len(spans) < 2:
        res = g("the subplot", "box")
        if res.outcome == "box":
            fb = res.bbox
        else:
            fb = BBox(0, 0, image.width, image.height)
        if "x" not in spans:
            spans["x"] = (fb.x1, fb.x2)
        if "y" not in spans:
            spans["y"] = (fb.y1, fb.y2)
    x1 = max(0, math.floor(spans["x"][0]))
    x2 = min(image.width, math.ceil(spans["x"][1]))
    y1 = max(0, math.floor(spans["y"][0]))
    y2 = min(image.height, math.ceil(spans["y"][1]))
    if x2 - x1 < 1 or y2 - y1 < 1:
        raise DegenerateRegion("magnification region is empty after clamping")
    region = image.pixels[y1:y2, x1:x2]
    out = RasterImage(scale_nearest(region, scale))

    rect = BBox(x1, y1, x2, y2)
    base = _derived_annotations(grounding, image, _crop_mapper(rect, -x1, -y1))
    if base is not None:
        scaled = [a.replace(bbox=a.bbox.scale(scale) if a.bbox else None, point=Point(a.point.x * scale, a.point.y * scale) if a.point else None) for a in base]
        register_derived(grounding, out, image, lambda a: None, _unpanel(scaled))

    parts = [f"{ax} {format_value(a)} to {format_value(b)}" for ax, (a, b) in window.items()]
    desc = f"magnified {' and '.join(parts)} by {scale:g}x"
    prov = g.provenance("magnify_region", axis_window={k: list(v) for k, v in window.items()}, scale=scale)
    return ToolOutput(out, desc, prov, {"region": [x1, y1, x2, y2]})


def scale_nearest(arr: np.ndarray, scale: float) -> np.ndarray:
    """Nearest-neighbour resize; output dims are ``ceil(dims * scale)``."""
    h, w = arr.shape[:2]
    oh, ow = math.ceil(h * scale), math.ceil(w * scale)
    rows = np.minimum((np.arange(oh) / scale).astype(np.int64), h - 1)
    cols = np.minimum((np.arange(ow) / scale).astype(np.int64), w - 1)
    return arr[rows][:, cols]


def interpolate_tick_pixel(value: float, ticks: Sequence[tuple[float, float]]) -> float:
    """Pixel for ``value`` from resolved (value, pixel) tick pairs.

    Uses the bracketing pair inside the tick range; beyond it, extrapolates from
    the two outermost ticks up to 10% of the tick span.
    """
    pts = sorted(set(ticks))
    for v, p in pts:
        if v == value:
            return p
    if len(pts) < 2:
        raise GroundingMiss("need at least two resolvable ticks to interpolate")
    lo_v, hi_v = pts[0][0], pts[-1][0]
    span = hi_v - lo_v
    if value < lo_v:
        if lo_v - value > EXTRAPOLATE_LIMIT * span:
            raise GroundingMiss(f"value {value} too far below the resolved ticks")
        (v0, p0), (v1, p1) = pts[0], pts[1]
    elif value > hi_v:
        if value - hi_v > EXTRAPOLATE_LIMIT * span:
            raise GroundingMiss(f"value {value} too far above the resolved ticks")
        (v0, p0), (v1, p1) = pts[-2], pts[-1]
    else:
        below = [t for t in pts if t[0] < value]
        above = [t for t in pts if t[0] > value]
        (v0, p0), (v1, p1) = below[-1], above[0]
    return p0 + (value - v0) / (v1 - v0) * (p1 - p0)


def add_auxiliary_line(
    image: RasterImage,
    axis: Literal["x", "y"],
    value: float,
    grounding: GroundingBackend,
    ticks: Sequence[float] | None = None,
    color: tuple[int, int, int] = DEFAULT_LINE_COLOR,
    dash: tuple[int, int] | None = DEFAULT_DASH,
) -> ToolOutput:
    """Draw a full-width (y) or full-height (x) reference line at an axis value.

    ``ticks`` lists tick values visible on that axis; the value's pixel is
    interpolated from the nearest resolvable ones. Without ``ticks`` the value
    itself must be a tick.
    """
    if axis not in ("x", "y"):
        raise ValueError("axis must be 'x' or 'y'")
    g = GroundingLog(grounding, image)
    probe = [value] if ticks is None else list(dict.fromkeys([*ticks]))
    resolved = []
    for t in probe:
        res = g(_tick_prompt(axis, t), "point")
        if res.found:
            p = res.point if res.point is not None else res.bbox.center
            resolved.append((float(t), p.x if axis == "x" else p.y))
    if not resolved:
        raise GroundingMiss(f"no ticks resolvable on the {axis} axis")
    pixel = interpolate_tick_pixel(float(value), resolved)
    idx = round_half_away(pixel)
    arr = image.to_array()
    length = image.width if axis == "y" else image.height
    pos = np.arange(length)
    lit = pos if dash is None else pos[np.mod(pos, dash[0] + dash[1]) < dash[0]]
    if axis == "y":
        if 0 <= idx < image.height:
            arr[idx, lit] = color
    else:
        if 0 <= idx < image.width:
            arr[lit, idx] = color
    out = RasterImage(arr)
    register_derived(grounding, out, image, lambda a: a)
    desc = f"added {'horizontal' if axis == 'y' else 'vertical'} auxiliary line at {axis}={format_value(value)}"
    prov = g.provenance("add_auxiliary_line", axis=axis, value=value, ticks=list(ticks) if ticks else None)
    return ToolOutput(out, desc, prov, {"pixel": pixel, "drawn_index": idx})


def _filtered_counts(pixels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Unique packed colors and their counts, excluding near-white and near-black."""
    flat = pixels.reshape(-1, 3).astype(np.int64)
    d_white = np.sqrt(((flat - 255) ** 2).sum(axis=1))
    d_black = np.sqrt((flat**2).sum(axis=1))
    keep = flat[(d_white >= FILTER_DIST) & (d_black >= FILTER_DIST)]
    packed = (keep[:, 0] << 16) | (keep[:, 1] << 8) | keep[:, 2]
    return np.unique(packed, return_counts=True)


def _box_pixels(image: RasterImage, box: BBox) -> np.ndarray:
    b = box.clamp(image.width, image.height)
    x1, y1, x2, y2 = b.pixel_rect()
    return image.pixels[y1:y2, x1:x2]


def dominant_color(image: RasterImage, box: BBox) -> ColorRGB:
    """Most frequent non-background, non-text color; ties go to the lowest packed RGB."""
    px = _box_pixels(image, box)
    if px.size == 0:
        raise EmptyAfterFiltering("box is empty after clamping")
    colors, counts = _filtered_counts(px)
    if len(colors) == 0:
        raise EmptyAfterFiltering("all pixels are background or text")
    best = colors[counts == counts.max()].min()
    return ColorRGB(int(best >> 16) & 255, int(best >> 8) & 255, int(best) & 255)


def color_match_mask(pixels: np.ndarray, color: ColorRGB, tau: float) -> np.ndarray:
    diff = pixels.astype(np.int64) - np.array(color.as_tuple(), dtype=np.int64)
    return np.sqrt((diff**2).sum(axis=-1)) <= tau


def data_pixel_mask(pixels: np.ndarray) -> np.ndarray:
    """Pixels that are neither background white nor text/axis black."""
    flat = pixels.astype(np.int64)
    d_white = np.sqrt(((flat - 255) ** 2).sum(axis=-1))
    d_black = np.sqrt((flat**2).sum(axis=-1))
    return (d_white >= FILTER_DIST) & (d_black >= FILTER_DIST)


def legend_mask(image: RasterImage, legend_item: str, grounding: GroundingBackend, tau: float = MASK_TAU, _log: GroundingLog | None = None) -> tuple[np.ndarray, ColorRGB, BBox]:
    """Binary mask of plot-area pixels matching the legend item's color, plus the color and plot region."""
    g = _log or GroundingLog(grounding, image)
    icon = g.box(f'the legend item "{legend_item}"')
    icon_px = _box_pixels(image, icon)
    color = dominant_color(image, icon)
    share = color_match_mask(icon_px, color, 0.0).sum() / max(1, icon_px.shape[0] * icon_px.shape[1])
    if share < MIN_ICON_SHARE:
        raise AmbiguousColor(f"dominant icon color covers only {share:.0%} of the legend icon")
    sub = g("the subplot", "box")
    region = sub.bbox if sub.outcome == "box" else BBox(0, 0, image.width, image.height)
    x1, y1, x2, y2 = region.clamp(image.width, image.height).pixel_rect()
    allowed = np.zeros((image.height, image.width), dtype=bool)
    allowed[y1:y2, x1:x2] = True
    leg = g("the legend", "box")
    if leg.outcome == "box":
        lx1, ly1, lx2, ly2 = leg.bbox.pixel_rect()
        allowed[max(0, ly1) : ly2, max(0, lx1) : lx2] = False
    data = data_pixel_mask(image.pixels) & allowed
    match = color_match_mask(image.pixels, color, tau) & data
    return match, color, region


def mask_by_legend(
    image: RasterImage,
    legend_item: str,
    mode: Literal["keep_only", "remove"],
    grounding: GroundingBackend,
    tau: float = MASK_TAU,
) -> ToolOutput:
    """Keep only, or remove, the data series whose color matches a legend item."""
    if mode not in ("keep_only", "remove"):
        raise ValueError("mode must be 'keep_only' or 'remove'")
    g = GroundingLog(grounding, image)
    match, color, region = legend_mask(image, legend_item, grounding, tau, _log=g)
    x1, y1, x2, y2 = region.clamp(image.width, image.height).pixel_rect()
    arr = image.to_array()
    if mode == "remove":
        arr[match] = WHITE
    else:
        data = data_pixel_mask(image.pixels)
        in_region = np.zeros_like(data)
        in_region[y1:y2, x1:x2] = True
        legend_box = [c for c in g.calls if c["prompt"] == "the legend" and c["result"]["bbox"]]
        if legend_box:
            lx1, ly1, lx2, ly2 = BBox(*legend_box[0]["result"]["bbox"]).pixel_rect()
            in_region[max(0, ly1) : ly2, max(0, lx1) : lx2] = False
        arr[data & in_region & ~match] = WHITE
    out = RasterImage(arr)
    register_derived(grounding, out, image, lambda a: a)
    verb = "kept only" if mode == "keep_only" else "removed"
    desc = f'{verb} the data series of legend item "{legend_item}" (color {color.hex()})'
    prov = g.provenance("mask_by_legend", legend_item=legend_item, mode=mode, tau=tau)
    return ToolOutput(out, desc, prov, {"color": list(color.as_tuple()), "matched_pixels": int(match.sum())})

