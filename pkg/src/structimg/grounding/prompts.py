"""Textual element references: a small prompt grammar and canonical prompts."""

from __future__ import annotations

import re
from dataclasses import dataclass

from ..core import ElementAnnotation

_NUM = r"[-+]?(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][-+]?\d+)?"
_PANEL_WORD = r"(?:subplot|sub-plot|subfigure|sub-figure|panel|chart|plot)"
_GRID = re.compile(rf"(?:{_PANEL_WORD}\s+)?(?:at|in)?\s*row\s*(\d+)\s*,?\s*(?:and\s+)?col(?:umn)?\s*(\d+)", re.I)
_QUALIFIER = re.compile(rf"\s+(?:of|in|on|for|from)\s+(?:the\s+)?{_PANEL_WORD}\s+(?:at\s+)?row\s*(\d+)\s*,?\s*(?:and\s+)?col(?:umn)?\s*(\d+)\s*$", re.I)
_QUOTED = r"[\"“'‘](.+?)[\"”'’]"

_TICK = re.compile(rf"^tick(?:\s+mark)?(?:\s+(?:at|for|labeled|labelled|of))?(?:\s+value)?\s+({_NUM})\s+on\s+(?:the\s+)?([xy])[\s-]*axis$", re.I)
_LEGEND_ITEM = re.compile(rf"^legend\s+(?:item|entry|icon|marker)\s+(?:for\s+|of\s+)?(?:{_QUOTED}|(.+))$", re.I)
_LEGEND = re.compile(r"^legend(?:\s+(?:region|box|area))?$", re.I)
_TEXT = re.compile(rf"^(?:text(?:\s+label)?|label)\s+{_QUOTED}$", re.I)
_TITLE = re.compile(r"^(?:chart\s+|plot\s+)?title$", re.I)
_AXIS_LABEL = re.compile(r"^([xy])[\s-]*axis\s+label$", re.I)
_POINT = re.compile(r"^point\s+([A-Za-z][A-Za-z0-9']*)$", re.I)
_SUBPLOT = re.compile(rf"^{_PANEL_WORD}(?:\s+(?:at\s+)?row\s*(\d+)\s*,?\s*(?:and\s+)?col(?:umn)?\s*(\d+))?$", re.I)


@dataclass(frozen=True)
class ElementRef:
    """Structured reading of a grounding prompt. ``category`` is None for opaque text."""

    category: str | None
    text: str
    row: int | None = None
    col: int | None = None
    label: str | None = None
    axis: str | None = None
    value: float | None = None
    role: str | None = None

    @property
    def opaque(self) -> bool:
        return self.category is None


def _clean(prompt: str) -> str:
    s = " ".join(prompt.replace(" ", " ").split())
    s = s.rstrip(".?! ")
    return re.sub(r"^(?:the|a)\s+", "", s, flags=re.I)


def parse_element_prompt(prompt: str) -> ElementRef:
    """Best-effort parse of an element reference; never raises."""
    text = prompt if isinstance(prompt, str) else str(prompt)
    s = _clean(text)
    row = col = None

    m = _SUBPLOT.match(s)
    if m:
        r, c = m.group(1), m.group(2)
        return ElementRef("subplot", text, int(r) if r else None, int(c) if c else None)

    q = _QUALIFIER.search(s)
    if q:
        row, col = int(q.group(1)), int(q.group(2))
        s = _clean(s[: q.start()])

    m = _TICK.match(s)
    if m:
        return ElementRef("axis_tick", text, row, col, axis=m.group(2).lower(), value=float(m.group(1)))
    m = _LEGEND_ITEM.match(s)
    if m:
        label = (m.group(1) or m.group(2) or "").strip()
        if label:
            return ElementRef("legend_region", text, row, col, label=label, role="legend_item")
    if _LEGEND.match(s):
        return ElementRef("legend_region", text, row, col, role="legend")
    m = _TEXT.match(s)
    if m:
        return ElementRef("text_label", text, row, col, label=m.group(1))
    if _TITLE.match(s):
        return ElementRef("text_label", text, row, col, role="title")
    m = _AXIS_LABEL.match(s)
    if m:
        return ElementRef("text_label", text, row, col, role=f"{m.group(1).lower()}_label")
    m = _POINT.match(s)
    if m:
        return ElementRef("geom_point", text, row, col, label=m.group(1))
    return ElementRef(None, text)


def format_value(v: float) -> str:
    if float(v).is_integer():
        return str(int(v))
    return f"{v:.12g}"


def panel_grid(annotations) -> dict[str | None, tuple[int, int]]:
    """Map panel prefix to its subplot's grid position."""
    return {a.panel: a.grid_pos for a in annotations if a.category == "subplot" and a.grid_pos}


def canonical_prompt(ann: ElementAnnotation, grid: dict[str | None, tuple[int, int]] | None = None) -> str:
    """Fixed evaluation prompt for an annotation, qualified by panel when needed."""
    pos = (grid or {}).get(ann.panel) if ann.panel is not None else None
    qual = f" of the subplot at row {pos[0]}, column {pos[1]}" if pos else ""
    lid = ann.local_id
    if ann.category == "subplot":
        if ann.grid_pos:
            return f"the subplot at row {ann.grid_pos[0]}, column {ann.grid_pos[1]}"
        return "the subplot"
    if ann.category == "legend_region":
        if lid.startswith("legend_item:"):
            return f'the legend item "{ann.label_text}"{qual}'
        return f"the legend{qual}"
    if ann.category == "text_label":
        return f'the text label "{ann.label_text}"{qual}'
    if ann.category == "axis_tick":
        return f"the tick {format_value(ann.axis_value)} on the {ann.axis} axis{qual}"
    return f"point {ann.label_text}"


def expected_kind(category: str) -> str:
    return "point" if category in ("axis_tick", "geom_point") else "box"


def grid_from_prompt(prompt: str) -> tuple[int, int] | None:
    m = _GRID.search(prompt)
    return (int(m.group(1)), int(m.group(2))) if m else None
