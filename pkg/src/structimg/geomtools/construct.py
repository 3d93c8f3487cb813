"""Geometric tool agents: point connection, perpendicular and parallel construction."""

from __future__ import annotations

import math
import string

from ..core import Point, RasterImage, round_half_away
from ..draw import Canvas, dash_intervals
from ..grounding import GroundingBackend, register_derived
from ..toolkit import GroundingLog, ToolError, ToolOutput
from .diagram import GeomDiagram, LineRef, point_annotation

LINE_COLOR = (255, 0, 0)
DASH = (6, 4)
DOT_SIZE = 3
OVERSHOOT = 8.0
MIN_SEPARATION = 2.0
ON_LINE_TOL = 0.5
FOOT_LABELS = tuple(string.ascii_uppercase[4:]) + tuple(string.ascii_uppercase[:4])


class CoincidentPoints(ToolError):
    pass


class DegenerateLine(ToolError):
    pass


def _image(d: GeomDiagram | RasterImage) -> RasterImage:
    return d.image if isinstance(d, GeomDiagram) else d


def _point_prompt(label: str) -> str:
    return f"point {label}"


def foot_of_perpendicular(p: Point, a: Point, b: Point) -> Point:
    """Orthogonal projection of ``p`` onto the infinite line through ``a`` and ``b``."""
    dx, dy = b.x - a.x, b.y - a.y
    den = dx * dx + dy * dy
    if den == 0:
        raise DegenerateLine("reference points coincide")
    t = ((p.x - a.x) * dx + (p.y - a.y) * dy) / den
    return Point(a.x + t * dx, a.y + t * dy)


def clip_line(p: Point, d: tuple[float, float], width: float, height: float) -> tuple[Point, Point] | None:
    """Liang-Barsky clip of the infinite line ``p + t d`` to ``[0, width] x [0, height]``."""
    t0, t1 = -math.inf, math.inf
    for q_neg, q_pos, dv in ((p.x, width - p.x, d[0]), (p.y, height - p.y, d[1])):
        if dv == 0:
            if q_neg < 0 or q_pos < 0:
                return None
            continue
        ta, tb = -q_neg / dv, q_pos / dv
        lo, hi = min(ta, tb), max(ta, tb)
        t0, t1 = max(t0, lo), min(t1, hi)
    if t0 > t1 or not math.isfinite(t0):
        return None
    return Point(p.x + t0 * d[0], p.y + t0 * d[1]), Point(p.x + t1 * d[0], p.y + t1 * d[1])


def _next_label(g: GroundingLog, taken: set[str]) -> str:
    for lab in FOOT_LABELS:
        if lab in taken:
            continue
        if not g(_point_prompt(lab), "point").found:
            return lab
    raise ToolError("no free single-letter label for the constructed point")


def _register(grounding: GroundingBackend, out: RasterImage, image: RasterImage, extra=()) -> None:
    register_derived(grounding, out, image, lambda a: a, extra)


def connect_points(diagram: GeomDiagram | RasterImage, a_label: str, b_label: str, grounding: GroundingBackend) -> ToolOutput:
    """Dashed segment between two labeled points, with dots on both ends."""
    image = _image(diagram)
    g = GroundingLog(grounding, image)
    a, b = g.point(_point_prompt(a_label)), g.point(_point_prompt(b_label))
    if a.distance(b) < MIN_SEPARATION:
        raise CoincidentPoints(f"points {a_label} and {b_label} are {a.distance(b):.2f} px apart")
    cv = Canvas.from_image(image)
    cv.dashed(a.x, a.y, b.x, b.y, LINE_COLOR, *DASH)
    cv.dot(a.x, a.y, DOT_SIZE, LINE_COLOR)
    cv.dot(b.x, b.y, DOT_SIZE, LINE_COLOR)
    out = cv.freeze()
    _register(grounding, out, image)
    length = a.distance(b)
    return ToolOutput(
        out,
        f"connected points {a_label} and {b_label} with a dashed segment of length {length:.2f} px",
        g.provenance("connect_points", a_label=a_label, b_label=b_label),
        {"a": a.to_list(), "b": b.to_list(), "length": length, "dashes": len(dash_intervals(length, *DASH))},
    )


def _line_points(g: GroundingLog, line: LineRef) -> tuple[Point, Point]:
    a, b = g.point(_point_prompt(line.a_label)), g.point(_point_prompt(line.b_label))
    if a == b:
        raise DegenerateLine(f"points {line.a_label} and {line.b_label} coincide")
    return a, b


def construct_perpendicular(diagram: GeomDiagram | RasterImage, p_label: str, line: LineRef, grounding: GroundingBackend) -> ToolOutput:
    """Drop a perpendicular from P to line AB; the foot gets the next free letter label."""
    image = _image(diagram)
    g = GroundingLog(grounding, image)
    p = g.point(_point_prompt(p_label))
    a, b = _line_points(g, line)
    foot = foot_of_perpendicular(p, a, b)
    dist = p.distance(foot)
    args = {"p_label": p_label, "line": [line.a_label, line.b_label]}
    name = f"{line.a_label}{line.b_label}"
    if dist < ON_LINE_TOL:
        return ToolOutput(
            RasterImage(image.to_array()),
            f"point {p_label} already lies on line {name}; perpendicular has zero length, nothing drawn",
            g.provenance("construct_perpendicular", **args),
            {"foot": foot.to_list(), "foot_label": None, "length": 0.0},
        )
    taken = set(diagram.labels) if isinstance(diagram, GeomDiagram) else set()
    taken |= {p_label, line.a_label, line.b_label}
    label = _next_label(g, taken)
    ux, uy = (foot.x - p.x) / dist, (foot.y - p.y) / dist
    end = Point(foot.x + OVERSHOOT * ux, foot.y + OVERSHOOT * uy)
    cv = Canvas.from_image(image)
    cv.dashed(p.x, p.y, end.x, end.y, LINE_COLOR, *DASH)
    cv.dot(foot.x, foot.y, DOT_SIZE, LINE_COLOR)
    cv.text(round_half_away(foot.x) + 3, round_half_away(foot.y) + 3, label, LINE_COLOR)
    out = cv.freeze()
    foot_ann = [point_annotation(label, foot)] if 0 <= foot.x < image.width and 0 <= foot.y < image.height else []
    _register(grounding, out, image, foot_ann)
    return ToolOutput(
        out,
        f"constructed perpendicular from {p_label} to line {name}; foot {label} at ({foot.x:.2f}, {foot.y:.2f}), length {dist:.2f} px",
        g.provenance("construct_perpendicular", **args),
        {"foot": foot.to_list(), "foot_label": label, "length": dist},
    )


def construct_parallel(diagram: GeomDiagram | RasterImage, p_label: str, line: LineRef, grounding: GroundingBackend) -> ToolOutput:
    """Line through P with direction B - A, extended to the image borders."""
    image = _image(diagram)
    g = GroundingLog(grounding, image)
    p = g.point(_point_prompt(p_label))
    a, b = _line_points(g, line)
    direction = (b.x - a.x, b.y - a.y)
    ends = clip_line(p, direction, image.width - 1, image.height - 1)
    cv = Canvas.from_image(image)
    if ends is not None:
        cv.dashed(ends[0].x, ends[0].y, ends[1].x, ends[1].y, LINE_COLOR, *DASH)
    out = cv.freeze()
    _register(grounding, out, image)
    name = f"{line.a_label}{line.b_label}"
    return ToolOutput(
        out,
        f"constructed line through {p_label} parallel to {name}",
        g.provenance("construct_parallel", p_label=p_label, line=[line.a_label, line.b_label]),
        {"direction": list(direction), "endpoints": [e.to_list() for e in ends] if ends else None},
    )
