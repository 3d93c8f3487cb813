"""Multi-panel composition of rendered single-panel charts."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..core import ElementAnnotation, RasterImage

MIN_PANELS = 2
MAX_PANELS = 16
MARGIN_RANGE = (4, 40)
MAX_CANVAS = 8192


class LayoutOverflow(ValueError):
    """The panels cannot be arranged on a composite canvas."""


@dataclass(frozen=True)
class PanelLayout:
    rows: int
    cols: int
    h_gaps: tuple[int, ...]  # cols + 1 widths, left edge to right edge
    v_gaps: tuple[int, ...]  # rows + 1 heights, top edge to bottom edge
    offsets: tuple[tuple[int, int], ...]  # per panel, row-major
    grid: tuple[tuple[int, int], ...]  # 1-based (row, col) per panel
    size: tuple[int, int]

    @property
    def margins(self) -> tuple[int, ...]:
        return self.h_gaps + self.v_gaps


def plan_layout(sizes: Sequence[tuple[int, int]], seed: int, max_canvas: int = MAX_CANVAS) -> PanelLayout:
    """Near-square grid with per-gap random margins for panels of the given (w, h) sizes."""
    n = len(sizes)
    if not MIN_PANELS <= n <= MAX_PANELS:
        raise LayoutOverflow(f"composites hold {MIN_PANELS}..{MAX_PANELS} panels, got {n}")
    cols = math.ceil(math.sqrt(n))
    rows = math.ceil(n / cols)
    rng = np.random.default_rng(np.random.SeedSequence([seed, n]))
    lo, hi = MARGIN_RANGE
    h_gaps = tuple(int(v) for v in rng.integers(lo, hi + 1, size=cols + 1))
    v_gaps = tuple(int(v) for v in rng.integers(lo, hi + 1, size=rows + 1))
    grid = tuple((i // cols + 1, i % cols + 1) for i in range(n))
    col_w = [0] * cols
    row_h = [0] * rows
    for (r, c), (w, h) in zip(grid, sizes):
        col_w[c - 1] = max(col_w[c - 1], w)
        row_h[r - 1] = max(row_h[r - 1], h)
    col_x = [h_gaps[0]]
    for c in range(1, cols):
        col_x.append(col_x[-1] + col_w[c - 1] + h_gaps[c])
    row_y = [v_gaps[0]]
    for r in range(1, rows):
        row_y.append(row_y[-1] + row_h[r - 1] + v_gaps[r])
    width = col_x[-1] + col_w[-1] + h_gaps[-1]
    height = row_y[-1] + row_h[-1] + v_gaps[-1]
    if width > max_canvas or height > max_canvas:
        raise LayoutOverflow(f"composite {width}x{height} exceeds {max_canvas}px")
    offsets = tuple((col_x[c - 1], row_y[r - 1]) for r, c in grid)
    return PanelLayout(rows, cols, h_gaps, v_gaps, offsets, grid, (width, height))


def compose_multipanel(
    charts: Sequence[tuple[RasterImage, Sequence[ElementAnnotation]]],
    seed: int,
    max_canvas: int = MAX_CANVAS,
) -> tuple[RasterImage, list[ElementAnnotation]]:
    """Arrange panels on one white canvas and translate their annotations.

    Panel ``k`` (row-major) has its element ids prefixed ``p<k>/`` and its
    subplot annotation gains ``grid_pos``.
    """
    layout = plan_layout([(img.width, img.height) for img, _ in charts], seed, max_canvas)
    W, H = layout.size
    arr = np.full((H, W, 3), 255, dtype=np.uint8)
    out: list[ElementAnnotation] = []
    for k, ((img, anns), (ox, oy), pos) in enumerate(zip(charts, layout.offsets, layout.grid)):
        arr[oy : oy + img.height, ox : ox + img.width] = img.pixels
        for a in anns:
            if a.panel is not None:
                raise LayoutOverflow(f"panel {k} is already a composite ({a.element_id})")
            moved = a.translate(ox, oy).replace(element_id=f"p{k}/{a.element_id}")
            if a.category == "subplot":
                moved = moved.replace(grid_pos=pos)
            out.append(moved)
    return RasterImage(arr), out
