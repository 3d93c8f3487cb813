"""Labeled geometry diagrams and their on-disk form (PNG + JSONL of geom_point records)."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping

from ..core import ElementAnnotation, Point, RasterImage, load_png, read_annotations, save_png, write_annotations
from ..grounding import OracleGrounder


@dataclass(frozen=True, eq=False)
class GeomDiagram:
    image: RasterImage
    points: tuple[tuple[str, Point], ...]

    def __post_init__(self) -> None:
        labels = [lab for lab, _ in self.points]
        if any(not lab for lab in labels):
            raise ValueError("point labels must be non-empty")
        if len(set(labels)) != len(labels):
            raise ValueError(f"duplicate point labels in {labels}")
        for lab, p in self.points:
            if not (0 <= p.x < self.image.width and 0 <= p.y < self.image.height):
                raise ValueError(f"point {lab} at ({p.x}, {p.y}) lies outside the image")

    @classmethod
    def from_mapping(cls, image: RasterImage, points: Mapping[str, tuple[float, float] | Point]) -> GeomDiagram:
        return cls(image, tuple((k, v if isinstance(v, Point) else Point(*v)) for k, v in points.items()))

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(lab for lab, _ in self.points)

    def point(self, label: str) -> Point:
        for lab, p in self.points:
            if lab == label:
                return p
        raise KeyError(label)

    def annotations(self) -> list[ElementAnnotation]:
        return [point_annotation(lab, p) for lab, p in self.points]

    def oracle(self) -> OracleGrounder:
        return OracleGrounder.from_annotations(self.image, self.annotations())

    def save(self, png_path: str | Path, jsonl_path: str | Path | None = None) -> tuple[Path, Path]:
        png = save_png(self.image, png_path)
        jsonl = Path(jsonl_path) if jsonl_path else png.with_suffix(".jsonl")
        write_annotations(self.annotations(), jsonl)
        return png, jsonl

    @classmethod
    def load(cls, png_path: str | Path, jsonl_path: str | Path | None = None) -> GeomDiagram:
        png = Path(png_path)
        anns = read_annotations(Path(jsonl_path) if jsonl_path else png.with_suffix(".jsonl"))
        return cls(load_png(png), tuple(_label_of(a) for a in anns if a.category == "geom_point"))


@dataclass(frozen=True)
class LineRef:
    a_label: str
    b_label: str

    def __post_init__(self) -> None:
        if self.a_label == self.b_label:
            raise ValueError("a line needs two distinct point labels")


def point_annotation(label: str, p: Point) -> ElementAnnotation:
    return ElementAnnotation(f"point:{label}", "geom_point", point=p, label_text=label)


def _label_of(a: ElementAnnotation) -> tuple[str, Point]:
    return (a.label_text or a.local_id.partition(":")[2], a.point)


def diagram_from_records(image: RasterImage, records: Iterable[dict]) -> GeomDiagram:
    """Build a diagram from ``{"label", "x", "y"}`` records."""
    return GeomDiagram(image, tuple((str(r["label"]), Point(float(r["x"]), float(r["y"]))) for r in records))
