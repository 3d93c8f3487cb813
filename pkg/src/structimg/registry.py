"""Tool registry: machine-readable signatures plus adapters from planner calls to tool functions.

Dispatch and critique name tools by their registry name (``Subfigure_Cropping``);
planner actions call them by function name (``crop_subfigure``).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from functools import partial
from typing import Any, Callable, Iterable, Mapping

from . import charttools
from .core import RasterImage
from .geomtools import LineRef, connect_points, construct_parallel, construct_perpendicular
from .geomtools.expr import MathDomain, ParseError, eval_expression
from .grounding import GroundingBackend
from .toolkit import ToolError, ToolOutput


class ToolArgumentError(ToolError):
    pass


@dataclass(frozen=True)
class Param:
    name: str
    type: str
    required: bool = True
    description: str = ""

    def to_json(self) -> dict:
        return {"name": self.name, "type": self.type, "required": self.required}


Runner = Callable[[Mapping[str, Any], GroundingBackend], "ToolOutput | str"]


@dataclass(frozen=True)
class ToolSpec:
    name: str
    function: str
    params: tuple[Param, ...]
    description: str
    run: Runner = field(repr=False, compare=False)

    def signature(self) -> dict:
        return {
            "name": self.name,
            "function": self.function,
            "params": [p.to_json() for p in self.params],
            "description": self.description,
        }

    def prompt_text(self) -> str:
        args = ", ".join(f"{p.name}: {p.type}{'' if p.required else ' (optional)'}" for p in self.params)
        return f"- {self.name}: {self.function}({args})\n  {self.description}"

    def bind(self, args: Mapping[str, Any]) -> dict[str, Any]:
        known = {p.name for p in self.params}
        extra = [k for k in args if k not in known]
        if extra:
            raise ToolArgumentError(f"{self.function} got unexpected argument(s) {extra}")
        missing = [p.name for p in self.params if p.required and p.name not in args]
        if missing:
            raise ToolArgumentError(f"{self.function} is missing argument(s) {missing}")
        return dict(args)


def _num(v: Any, name: str) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float, str)):
        raise ToolArgumentError(f"{name} must be a number")
    try:
        return float(v)
    except ValueError:
        raise ToolArgumentError(f"{name} must be a number, got {v!r}") from None


def _img(v: Any, name: str = "image") -> RasterImage:
    if not isinstance(v, RasterImage):
        raise ToolArgumentError(f"{name} must reference an image id from the image pool")
    return v


def _number_list(v: Any, name: str) -> list[float] | None:
    if v is None:
        return None
    if isinstance(v, (int, float)):
        return [float(v)]
    return [_num(t.strip(), name) for t in str(v).split(",") if t.strip()]


def _run_crop(a, g):
    return charttools.crop_subfigure(_img(a["image"]), str(a["target_desc"]), g)


def _run_magnify(a, g, default_scale: float = 2.0):
    window = {}
    for axis in ("x", "y"):
        lo, hi = a.get(f"{axis}_start"), a.get(f"{axis}_end")
        if (lo is None) != (hi is None):
            raise ToolArgumentError(f"give both {axis}_start and {axis}_end")
        if lo is not None:
            window[axis] = (_num(lo, f"{axis}_start"), _num(hi, f"{axis}_end"))
    if not window:
        raise ToolArgumentError("magnify_region needs an x and/or y window")
    return charttools.magnify_region(_img(a["image"]), window, g, scale=_num(a.get("scale", default_scale), "scale"))


def _run_aux(a, g):
    axis = str(a["axis"]).lower()
    if axis not in ("x", "y"):
        raise ToolArgumentError("axis must be 'x' or 'y'")
    return charttools.add_auxiliary_line(_img(a["image"]), axis, _num(a["value"], "value"), g, ticks=_number_list(a.get("ticks"), "ticks"))


def _run_mask(a, g, tau: float = charttools.MASK_TAU):
    mode = str(a.get("mode", "keep_only"))
    if mode not in ("keep_only", "remove"):
        raise ToolArgumentError("mode must be 'keep_only' or 'remove'")
    return charttools.mask_by_legend(_img(a["image"]), str(a["legend_item"]), mode, g, tau=tau)


def _run_connect(a, g):
    return connect_points(_img(a["image"]), str(a["a_label"]), str(a["b_label"]), g)


def _line(a) -> LineRef:
    try:
        return LineRef(str(a["a_label"]), str(a["b_label"]))
    except ValueError as e:
        raise ToolArgumentError(str(e)) from None


def _run_perp(a, g):
    return construct_perpendicular(_img(a["image"]), str(a["p_label"]), _line(a), g)


def _run_par(a, g):
    return construct_parallel(_img(a["image"]), str(a["p_label"]), _line(a), g)


def _run_code(a, g):
    try:
        value = eval_expression(str(a["expr"]))
    except (ParseError, MathDomain) as e:
        raise ToolError(f"{type(e).__name__}: {e}") from None
    return f"{value:.12g}"


_IMAGE = Param("image", "image_id")
_LINE = (Param("p_label", "string"), Param("a_label", "string"), Param("b_label", "string"))

CHART_TOOLS: tuple[ToolSpec, ...] = (
    ToolSpec(
        "Subfigure_Cropping",
        "crop_subfigure",
        (_IMAGE, Param("target_desc", "string")),
        'Crops one panel out of a multi-panel chart, e.g. target_desc="subplot at row 2, column 1". '
        "A legend placed outside the panel is stacked underneath the crop.",
        _run_crop,
    ),
    ToolSpec(
        "Region_Magnification",
        "magnify_region",
        (_IMAGE, Param("x_start", "number", False), Param("x_end", "number", False), Param("y_start", "number", False), Param("y_end", "number", False), Param("scale", "number", False)),
        "Zooms into the axis window between two tick values, keeping the nearby axis ruler. Endpoints must be tick labels.",
        _run_magnify,
    ),
    ToolSpec(
        "Adding_Auxiliary_Lines",
        "add_auxiliary_line",
        (_IMAGE, Param("axis", "string"), Param("value", "number"), Param("ticks", "string", False)),
        "Draws a dashed red reference line at an axis value (horizontal for axis=y, vertical for axis=x). "
        'For values between ticks pass the visible tick values, e.g. ticks="0,10,20".',
        _run_aux,
    ),
    ToolSpec(
        "Masking_Data_with_Legend",
        "mask_by_legend",
        (_IMAGE, Param("legend_item", "string"), Param("mode", "string", False)),
        'Keeps only (mode="keep_only") or removes (mode="remove") the data series drawn in a legend item\'s color.',
        _run_mask,
    ),
)

GEOMETRY_TOOLS: tuple[ToolSpec, ...] = (
    ToolSpec(
        "Point_Connection",
        "connect_points",
        (_IMAGE, Param("a_label", "string"), Param("b_label", "string")),
        "Draws a dashed segment between two labeled points of a diagram.",
        _run_connect,
    ),
    ToolSpec(
        "Perpendicular_Line_Construction",
        "construct_perpendicular",
        (_IMAGE, *_LINE),
        "Drops a perpendicular from point p_label onto line a_label-b_label and labels the foot with a new letter.",
        _run_perp,
    ),
    ToolSpec(
        "Parallel_Line_Construction",
        "construct_parallel",
        (_IMAGE, *_LINE),
        "Draws the line through point p_label parallel to line a_label-b_label across the whole diagram.",
        _run_par,
    ),
    ToolSpec(
        "Code_Execution",
        "eval_expression",
        (Param("expr", "string"),),
        'Evaluates an arithmetic expression such as "sqrt(3^2+4^2)" with + - * / ^, parentheses, '
        "sqrt, sin, cos, tan, atan2, abs, radians, degrees and pi.",
        _run_code,
    ),
)


@dataclass(frozen=True)
class ToolRegistry:
    tools: tuple[ToolSpec, ...]

    def __post_init__(self) -> None:
        names = [t.name for t in self.tools]
        funcs = [t.function for t in self.tools]
        if len(set(names)) != len(names) or len(set(funcs)) != len(funcs):
            raise ValueError("tool names and function names must be unique")

    def __iter__(self):
        return iter(self.tools)

    def __len__(self) -> int:
        return len(self.tools)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(t.name for t in self.tools)

    def by_name(self, name: str) -> ToolSpec | None:
        return next((t for t in self.tools if t.name == name), None)

    def by_function(self, function: str) -> ToolSpec | None:
        return next((t for t in self.tools if t.function == function), None)

    def lookup(self, key: str) -> ToolSpec | None:
        return self.by_function(key) or self.by_name(key)

    def subset(self, names: Iterable[str]) -> ToolRegistry:
        """The named tools, in the order given; unknown names are skipped."""
        picked = [self.by_name(n) for n in dict.fromkeys(names)]
        return ToolRegistry(tuple(t for t in picked if t is not None))

    def normalize(self, names: Iterable[str]) -> list[str]:
        """Known registry names from a list of names or function names, deduplicated, first-seen order."""
        out: list[str] = []
        for n in names:
            spec = self.lookup(n.strip())
            if spec is not None and spec.name not in out:
                out.append(spec.name)
        return out

    def descriptions(self) -> str:
        return "\n".join(t.prompt_text() for t in self.tools)

    def signatures_json(self) -> str:
        return json.dumps([t.signature() for t in self.tools], indent=2)


@dataclass(frozen=True)
class ToolSettings:
    tau: float = charttools.MASK_TAU
    default_scale: float = 2.0


def default_registry(kind: str = "all", settings: ToolSettings = ToolSettings()) -> ToolRegistry:
    tools = {"chart": CHART_TOOLS, "geometry": GEOMETRY_TOOLS, "all": CHART_TOOLS + GEOMETRY_TOOLS}[kind]
    bound = {
        "mask_by_legend": partial(_run_mask, tau=settings.tau),
        "magnify_region": partial(_run_magnify, default_scale=settings.default_scale),
    }
    return ToolRegistry(tuple(replace(t, run=bound[t.function]) if t.function in bound else t for t in tools))
