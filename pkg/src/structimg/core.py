"""Geometry, raster and color value types plus the metric primitives.

Coordinates are pixel floats with the origin at the top-left corner and y
growing downward. A box ``[x1, y1, x2, y2]`` covers the half-open pixel cells
``x1 <= x < x2``; a point names the pixel cell that contains it.
"""

from __future__ import annotations

import hashlib
import io
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Iterator, Literal, Sequence

import numpy as np
from PIL import Image

Category = Literal["subplot", "legend_region", "text_label", "axis_tick", "geom_point"]

BOX_CATEGORIES: tuple[str, ...] = ("subplot", "legend_region", "text_label")
POINT_CATEGORIES: tuple[str, ...] = ("axis_tick", "geom_point")
CATEGORIES: tuple[str, ...] = BOX_CATEGORIES + POINT_CATEGORIES

WHITE = (255, 255, 255)
BLACK = (0, 0, 0)


class AnnotationError(ValueError):
    """An annotation record violates the schema."""


def round_half_away(v: float) -> int:
    """Round to the nearest integer, ties away from zero."""
    return int(math.floor(abs(v) + 0.5)) * (1 if v >= 0 else -1)


@dataclass(frozen=True)
class Point:
    x: float
    y: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"non-finite point ({self.x}, {self.y})")

    def translate(self, dx: float, dy: float) -> Point:
        return Point(self.x + dx, self.y + dy)

    def distance(self, other: Point) -> float:
        return math.hypot(self.x - other.x, self.y - other.y)

    def to_list(self) -> list[float]:
        return [self.x, self.y]


@dataclass(frozen=True)
class BBox:
    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self) -> None:
        vals = (self.x1, self.y1, self.x2, self.y2)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError(f"non-finite box {vals}")
        if self.x1 > self.x2 or self.y1 > self.y2:
            raise ValueError(f"inverted box {vals}")

    @classmethod
    def from_points(cls, xa: float, ya: float, xb: float, yb: float) -> BBox:
        return cls(min(xa, xb), min(ya, yb), max(xa, xb), max(ya, yb))

    @property
    def width(self) -> float:
        return self.x2 - self.x1

    @property
    def height(self) -> float:
        return self.y2 - self.y1

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def center(self) -> Point:
        return Point((self.x1 + self.x2) / 2, (self.y1 + self.y2) / 2)

    def translate(self, dx: float, dy: float) -> BBox:
        return BBox(self.x1 + dx, self.y1 + dy, self.x2 + dx, self.y2 + dy)

    def scale(self, s: float) -> BBox:
        return BBox(self.x1 * s, self.y1 * s, self.x2 * s, self.y2 * s)

    def clamp(self, width: float, height: float) -> BBox:
        def c(v: float, hi: float) -> float:
            return min(max(v, 0.0), hi)

        return BBox(c(self.x1, width), c(self.y1, height), c(self.x2, width), c(self.y2, height))

    def contains_box(self, other: BBox) -> bool:
        return (
            self.x1 <= other.x1 and self.y1 <= other.y1 and other.x2 <= self.x2 and other.y2 <= self.y2
        )

    def contains_point(self, p: Point) -> bool:
        return self.x1 <= p.x <= self.x2 and self.y1 <= p.y <= self.y2

    def union(self, other: BBox) -> BBox:
        return BBox(
            min(self.x1, other.x1), min(self.y1, other.y1), max(self.x2, other.x2), max(self.y2, other.y2)
        )

    def to_list(self) -> list[float]:
        return [self.x1, self.y1, self.x2, self.y2]

    def pixel_rect(self) -> tuple[int, int, int, int]:
        """Smallest integer cell rectangle covering the box."""
        return (
            math.floor(self.x1),
            math.floor(self.y1),
            math.ceil(self.x2),
            math.ceil(self.y2),
        )


@dataclass(frozen=True)
class ColorRGB:
    r: int
    g: int
    b: int

    def __post_init__(self) -> None:
        for v in (self.r, self.g, self.b):
            if not (0 <= int(v) <= 255) or int(v) != v:
                raise ValueError(f"channel out of range: {(self.r, self.g, self.b)}")

    def as_tuple(self) -> tuple[int, int, int]:
        return (self.r, self.g, self.b)

    @property
    def packed(self) -> int:
        return (self.r << 16) | (self.g << 8) | self.b

    def hex(self) -> str:
        return f"#{self.r:02x}{self.g:02x}{self.b:02x}"


def bbox_iou(a: BBox, b: BBox) -> float:
    """Intersection over union; degenerate unions score 1 only for identical boxes."""
    iw = min(a.x2, b.x2) - max(a.x1, b.x1)
    ih = min(a.y2, b.y2) - max(a.y1, b.y1)
    inter = iw * ih if iw > 0 and ih > 0 else 0.0
    union = a.area + b.area - inter
    if union <= 0:
        return 1.0 if a == b else 0.0
    return min(1.0, max(0.0, inter / union))


def pck_threshold(width: float, height: float) -> float:
    return 0.01 * max(width, height)


def pck_hit(pred: Point, gt: Point, width: float, height: float) -> bool:
    """Keypoint hit at 1% of the longer image side, boundary inclusive."""
    return pred.distance(gt) <= pck_threshold(width, height)


def color_distance(a: ColorRGB, b: ColorRGB) -> float:
    return math.sqrt((a.r - b.r) ** 2 + (a.g - b.g) ** 2 + (a.b - b.b) ** 2)


@dataclass(frozen=True, eq=False)
class RasterImage:
    """Immutable RGB pixel grid backed by a read-only ``(height, width, 3)`` uint8 array."""

    pixels: np.ndarray

    def __post_init__(self) -> None:
        arr = np.ascontiguousarray(self.pixels, dtype=np.uint8)
        if arr.ndim != 3 or arr.shape[2] != 3:
            raise ValueError(f"expected (h, w, 3) array, got {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError("image must be at least 1x1")
        if arr is self.pixels:
            arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "pixels", arr)

    @classmethod
    def blank(cls, width: int, height: int, color: tuple[int, int, int] = WHITE) -> RasterImage:
        arr = np.empty((height, width, 3), dtype=np.uint8)
        arr[:] = color
        return cls(arr)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    def pixel(self, x: int, y: int) -> ColorRGB:
        r, g, b = (int(v) for v in self.pixels[y, x])
        return ColorRGB(r, g, b)

    def to_array(self) -> np.ndarray:
        """A writable copy of the pixel grid."""
        return self.pixels.copy()

    @cached_property
    def digest(self) -> str:
        h = hashlib.sha1()
        h.update(f"{self.width}x{self.height}".encode())
        h.update(self.pixels.tobytes())
        return h.hexdigest()

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, RasterImage):
            return NotImplemented
        return self.pixels.shape == other.pixels.shape and bool(np.array_equal(self.pixels, other.pixels))

    def __hash__(self) -> int:
        return hash(self.digest)

    def crop(self, x1: int, y1: int, x2: int, y2: int) -> RasterImage:
        return RasterImage(self.pixels[y1:y2, x1:x2].copy())

    def to_png_bytes(self) -> bytes:
        return _png_cache(self)


def _png_cache(img: RasterImage) -> bytes:
    cached = img.__dict__.get("_png")
    if cached is None:
        buf = io.BytesIO()
        Image.fromarray(img.pixels, mode="RGB").save(buf, format="PNG", optimize=False, compress_level=6)
        cached = buf.getvalue()
        img.__dict__["_png"] = cached
    return cached


def save_png(img: RasterImage, path: str | Path) -> Path:
    path = Path(path)
    path.write_bytes(img.to_png_bytes())
    return path


def load_png(path: str | Path) -> RasterImage:
    with Image.open(path) as im:
        return RasterImage(np.asarray(im.convert("RGB")))


def png_size(path: str | Path) -> tuple[int, int]:
    """(width, height) read from the PNG header without decoding pixels."""
    with Image.open(path) as im:
        return im.size


@dataclass(frozen=True)
class ElementAnnotation:
    """Ground-truth pixel location of one chart or diagram element.

    Element ids follow a small naming convention the grounding oracle relies on:
    ``subplot``, ``legend``, ``legend_item:<name>``, ``title``, ``x_label``,
    ``y_label``, ``x_tick:<i>``, ``y_tick:<i>`` and ``point:<label>``. Panels of a
    multi-panel composite are prefixed ``p<k>/``.
    """

    element_id: str
    category: Category
    bbox: BBox | None = None
    point: Point | None = None
    label_text: str | None = None
    axis_value: float | None = None
    grid_pos: tuple[int, int] | None = None

    def __post_init__(self) -> None:
        if not self.element_id:
            raise AnnotationError("element_id must be non-empty")
        if self.category not in CATEGORIES:
            raise AnnotationError(f"unknown category {self.category!r}")
        if self.category in BOX_CATEGORIES:
            if self.bbox is None or self.point is not None:
                raise AnnotationError(f"{self.element_id}: {self.category} needs a bbox and no point")
        else:
            if self.point is None or self.bbox is not None:
                raise AnnotationError(f"{self.element_id}: {self.category} needs a point and no bbox")
        if self.grid_pos is not None and self.category != "subplot":
            raise AnnotationError(f"{self.element_id}: grid_pos only allowed on subplots")

    @property
    def panel(self) -> str | None:
        head, sep, _ = self.element_id.partition("/")
        return head if sep else None

    @property
    def local_id(self) -> str:
        return self.element_id.rpartition("/")[2]

    @property
    def axis(self) -> str | None:
        lid = self.local_id
        if lid.startswith("x_tick:"):
            return "x"
        if lid.startswith("y_tick:"):
            return "y"
        return None

    def translate(self, dx: float, dy: float) -> ElementAnnotation:
        return self.replace(
            bbox=self.bbox.translate(dx, dy) if self.bbox else None,
            point=self.point.translate(dx, dy) if self.point else None,
        )

    def replace(self, **changes) -> ElementAnnotation:
        vals = {f: getattr(self, f) for f in _ANN_FIELDS}
        vals.update(changes)
        return ElementAnnotation(**vals)

    def to_json(self) -> dict:
        return {
            "element_id": self.element_id,
            "category": self.category,
            "bbox": self.bbox.to_list() if self.bbox else None,
            "point": self.point.to_list() if self.point else None,
            "label_text": self.label_text,
            "axis_value": self.axis_value,
            "grid_pos": list(self.grid_pos) if self.grid_pos else None,
        }

    @classmethod
    def from_json(cls, d: dict) -> ElementAnnotation:
        extra = set(d) - set(_ANN_FIELDS)
        if extra:
            raise AnnotationError(f"unexpected keys {sorted(extra)}")
        try:
            bbox = BBox(*(float(v) for v in d["bbox"])) if d.get("bbox") is not None else None
            point = Point(*(float(v) for v in d["point"])) if d.get("point") is not None else None
            grid = d.get("grid_pos")
            return cls(
                element_id=d["element_id"],
                category=d["category"],
                bbox=bbox,
                point=point,
                label_text=d.get("label_text"),
                axis_value=float(d["axis_value"]) if d.get("axis_value") is not None else None,
                grid_pos=(int(grid[0]), int(grid[1])) if grid is not None else None,
            )
        except (KeyError, TypeError, ValueError) as e:
            if isinstance(e, AnnotationError):
                raise
            raise AnnotationError(f"bad annotation record {d!r}: {e}") from e


_ANN_FIELDS = ("element_id", "category", "bbox", "point", "label_text", "axis_value", "grid_pos")


def write_annotations(annotations: Iterable[ElementAnnotation], path: str | Path) -> Path:
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        for ann in annotations:
            fh.write(json.dumps(ann.to_json(), ensure_ascii=False, separators=(", ", ": ")))
            fh.write("\n")
    return path


def read_annotations(path: str | Path) -> list[ElementAnnotation]:
    out = []
    with Path(path).open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                out.append(ElementAnnotation.from_json(json.loads(line)))
            except (json.JSONDecodeError, AnnotationError) as e:
                raise AnnotationError(f"{path}:{lineno}: {e}") from e
    return out


@dataclass(frozen=True)
class ManifestEntry:
    image: str
    annotations: str
    kind: str


@dataclass(frozen=True)
class Manifest:
    """Corpus index. Entry paths are relative to the manifest's directory."""

    seed: int
    entries: tuple[ManifestEntry, ...]
    version: int = 1
    root: Path = field(default=Path("."), compare=False)

    def __iter__(self) -> Iterator[ManifestEntry]:
        return iter(self.entries)

    def __len__(self) -> int:
        return len(self.entries)

    def resolve(self, rel: str) -> Path:
        return self.root / rel

    def to_json(self) -> dict:
        return {
            "version": self.version,
            "seed": self.seed,
            "entries": [
                {"image": e.image, "annotations": e.annotations, "kind": e.kind} for e in self.entries
            ],
        }

    def write(self, path: str | Path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_json(), indent=2) + "\n", encoding="utf-8")
        return path

    @classmethod
    def load(cls, path: str | Path) -> Manifest:
        path = Path(path)
        d = json.loads(path.read_text(encoding="utf-8"))
        entries = tuple(ManifestEntry(e["image"], e["annotations"], e["kind"]) for e in d["entries"])
        return cls(seed=int(d["seed"]), entries=entries, version=int(d.get("version", 1)), root=path.parent)


def sequence_bbox(boxes: Sequence[BBox]) -> BBox:
    it = iter(boxes)
    acc = next(it)
    for b in it:
        acc = acc.union(b)
    return acc
