"""Hard-edged raster drawing on a mutable canvas.

Every primitive writes exact colors (no blending). An optional owner layer
records which logical element last painted each pixel, which is how the chart
renderer produces per-series ground-truth masks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import RasterImage, round_half_away
from .font import ink_extent, text_mask

NO_OWNER = -1


def dash_intervals(length: float, on: float, off: float) -> list[tuple[float, float]]:
    """Arc-length intervals that are lit by an ``on``/``off`` dash schedule."""
    if on <= 0:
        return []
    if off <= 0:
        return [(0.0, length)] if length > 0 else []
    out = []
    s = 0.0
    while s < length:
        out.append((s, min(s + on, length)))
        s += on + off
    return out


def segment_samples(x0: float, y0: float, x1: float, y1: float, step: float = 0.25) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Sample a segment densely; returns (xs, ys, arc_length)."""
    length = math.hypot(x1 - x0, y1 - y0)
    n = max(2, int(math.ceil(length / step)) + 1)
    t = np.linspace(0.0, 1.0, n)
    return x0 + t * (x1 - x0), y0 + t * (y1 - y0), t * length


def _round_arr(v: np.ndarray) -> np.ndarray:
    return (np.sign(v) * np.floor(np.abs(v) + 0.5)).astype(np.int64)


@dataclass
class Canvas:
    arr: np.ndarray
    owner: np.ndarray | None = None

    @classmethod
    def new(cls, width: int, height: int, color=(255, 255, 255), track_owner: bool = False) -> Canvas:
        arr = np.empty((height, width, 3), dtype=np.uint8)
        arr[:] = color
        owner = np.full((height, width), NO_OWNER, dtype=np.int16) if track_owner else None
        return cls(arr, owner)

    @classmethod
    def from_image(cls, img: RasterImage) -> Canvas:
        return cls(img.to_array())

    @property
    def width(self) -> int:
        return self.arr.shape[1]

    @property
    def height(self) -> int:
        return self.arr.shape[0]

    def freeze(self) -> RasterImage:
        return RasterImage(self.arr)

    def _put(self, xs: np.ndarray, ys: np.ndarray, color, owner: int, clip=None) -> None:
        x_lo, y_lo, x_hi, y_hi = clip if clip is not None else (0, 0, self.width, self.height)
        keep = (xs >= x_lo) & (xs < x_hi) & (ys >= y_lo) & (ys < y_hi)
        xs, ys = xs[keep], ys[keep]
        self.arr[ys, xs] = color
        if self.owner is not None:
            self.owner[ys, xs] = owner

    def fill_rect(self, x1: int, y1: int, x2: int, y2: int, color, owner: int = NO_OWNER, clip=None) -> None:
        """Fill the half-open cell rectangle ``[x1, x2) x [y1, y2)``."""
        cx1, cy1, cx2, cy2 = clip if clip is not None else (0, 0, self.width, self.height)
        x1, x2 = max(x1, cx1), min(x2, cx2)
        y1, y2 = max(y1, cy1), min(y2, cy2)
        if x1 >= x2 or y1 >= y2:
            return
        self.arr[y1:y2, x1:x2] = color
        if self.owner is not None:
            self.owner[y1:y2, x1:x2] = owner

    def rect_outline(self, x1: int, y1: int, x2: int, y2: int, color, owner: int = NO_OWNER) -> None:
        """1-px outline on the border cells of ``[x1, x2) x [y1, y2)``."""
        self.fill_rect(x1, y1, x2, y1 + 1, color, owner)
        self.fill_rect(x1, y2 - 1, x2, y2, color, owner)
        self.fill_rect(x1, y1, x1 + 1, y2, color, owner)
        self.fill_rect(x2 - 1, y1, x2, y2, color, owner)

    def stroke(self, x0, y0, x1, y1, color, thickness: int = 1, owner: int = NO_OWNER, clip=None) -> None:
        xs, ys, _ = segment_samples(x0, y0, x1, y1)
        self._stamp(_round_arr(xs), _round_arr(ys), color, thickness, owner, clip)

    def dashed(self, x0, y0, x1, y1, color, on: float = 6, off: float = 4, thickness: int = 1, clip=None) -> np.ndarray:
        """Dashed segment; returns the lit sample pixels as an ``(n, 2)`` array of (x, y)."""
        xs, ys, s = segment_samples(x0, y0, x1, y1)
        if off > 0:
            lit = np.mod(s, on + off) < on
        else:
            lit = np.ones_like(s, dtype=bool)
        px, py = _round_arr(xs[lit]), _round_arr(ys[lit])
        self._stamp(px, py, color, thickness, NO_OWNER, clip)
        return np.stack([px, py], axis=1)

    def _stamp(self, xs, ys, color, thickness, owner, clip) -> None:
        lo = -(thickness // 2)
        offs = range(lo, lo + thickness)
        for dy in offs:
            for dx in offs:
                self._put(xs + dx, ys + dy, color, owner, clip)

    def disc(self, cx: float, cy: float, radius: float, color, owner: int = NO_OWNER, clip=None) -> None:
        r = int(math.ceil(radius))
        ix, iy = round_half_away(cx), round_half_away(cy)
        yy, xx = np.mgrid[-r : r + 1, -r : r + 1]
        inside = xx * xx + yy * yy <= radius * radius
        self._put(xx[inside] + ix, yy[inside] + iy, color, owner, clip)

    def dot(self, cx: float, cy: float, size: int, color) -> None:
        """Square ``size`` x ``size`` dot centred on the pixel containing (cx, cy)."""
        ix, iy = round_half_away(cx), round_half_away(cy)
        lo = -(size // 2)
        self.fill_rect(ix + lo, iy + lo, ix + lo + size, iy + lo + size, color)

    def text(self, x: int, y: int, s: str, color=(0, 0, 0), scale: int = 1, rotate: bool = False) -> tuple[int, int, int, int] | None:
        """Draw text with its layout cell's top-left at (x, y); returns the ink extent."""
        mask = text_mask(s, scale)
        if rotate:
            mask = np.rot90(mask)
        return self.blit_mask(x, y, mask, color)

    def blit_mask(self, x: int, y: int, mask: np.ndarray, color) -> tuple[int, int, int, int] | None:
        ys, xs = np.nonzero(mask)
        self._put(xs + x, ys + y, color, NO_OWNER)
        ext = ink_extent(mask)
        if ext is None:
            return None
        x1, y1, x2, y2 = ext
        return (
            max(0, x1 + x),
            max(0, y1 + y),
            min(self.width, x2 + x),
            min(self.height, y2 + y),
        )
