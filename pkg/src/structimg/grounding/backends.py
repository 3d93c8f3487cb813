"""Grounding backends: annotation oracle, remote vision model, and test doubles."""

from __future__ import annotations

import re
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Literal, Protocol, Sequence, runtime_checkable

from ..core import BBox, ElementAnnotation, Manifest, Point, RasterImage, load_png, read_annotations
from ..remote import BackendUnavailable, ChatClient
from .prompts import ElementRef, parse_element_prompt

ExpectedKind = Literal["box", "point", "any"]
AnnotationMapper = Callable[[ElementAnnotation], "ElementAnnotation | None"]

__all__ = [
    "BackendUnavailable",
    "GroundingBackend",
    "GroundingRequest",
    "GroundingResult",
    "MalformedResponse",
    "NullGrounder",
    "OracleGrounder",
    "PerturbedGrounder",
    "RemoteGrounder",
    "ground",
    "parse_coordinates",
    "register_derived",
]


class MalformedResponse(ValueError):
    """The backend's reply contained no usable coordinates."""

    def __init__(self, message: str, raw_text: str) -> None:
        super().__init__(message)
        self.raw_text = raw_text


@dataclass(frozen=True)
class GroundingRequest:
    image_ref: str | RasterImage
    prompt: str
    expected_kind: ExpectedKind = "any"

    def __post_init__(self) -> None:
        if not isinstance(self.prompt, str) or not self.prompt.strip():
            raise ValueError("grounding prompt must be non-empty")


@dataclass(frozen=True)
class GroundingResult:
    outcome: Literal["box", "point", "not_found"]
    backend_id: str
    bbox: BBox | None = None
    point: Point | None = None
    raw_text: str | None = None

    @property
    def found(self) -> bool:
        return self.outcome != "not_found"

    @classmethod
    def not_found(cls, backend_id: str, raw_text: str | None = None) -> GroundingResult:
        return cls("not_found", backend_id, raw_text=raw_text)

    def clamped(self, width: int, height: int) -> GroundingResult:
        if self.bbox is not None:
            return GroundingResult(self.outcome, self.backend_id, bbox=self.bbox.clamp(width, height), raw_text=self.raw_text)
        if self.point is not None:
            p = Point(min(max(self.point.x, 0.0), width - 1.0), min(max(self.point.y, 0.0), height - 1.0))
            return GroundingResult(self.outcome, self.backend_id, point=p, raw_text=self.raw_text)
        return self

    def shifted(self, dx: float, dy: float) -> GroundingResult:
        return GroundingResult(
            self.outcome,
            self.backend_id,
            bbox=self.bbox.translate(dx, dy) if self.bbox else None,
            point=self.point.translate(dx, dy) if self.point else None,
            raw_text=self.raw_text,
        )

    def to_json(self) -> dict:
        return {
            "outcome": self.outcome,
            "backend_id": self.backend_id,
            "bbox": self.bbox.to_list() if self.bbox else None,
            "point": self.point.to_list() if self.point else None,
            "raw_text": self.raw_text,
        }


@runtime_checkable
class GroundingBackend(Protocol):
    backend_id: str

    def locate(self, image: RasterImage, request: GroundingRequest) -> GroundingResult: ...


def ground(
    backend: GroundingBackend,
    request: GroundingRequest,
    image: RasterImage | None = None,
    resolver: Callable[[str], RasterImage] | None = None,
) -> GroundingResult:
    """Run one grounding request and clamp the geometry to the image."""
    if image is None:
        ref = request.image_ref
        if isinstance(ref, RasterImage):
            image = ref
        elif resolver is not None:
            image = resolver(ref)
        else:
            image = load_png(ref)
    return backend.locate(image, request).clamped(image.width, image.height)


def register_derived(
    backend: GroundingBackend,
    child: RasterImage,
    parent: RasterImage,
    mapper: AnnotationMapper,
    extra: Iterable[ElementAnnotation] = (),
) -> None:
    """Tell backends that track ground truth how a tool output relates to its input."""
    hook = getattr(backend, "derive", None)
    if hook is not None:
        hook(child, parent, mapper, tuple(extra))


# --- coordinate parsing for model replies -------------------------------------------------

_NUM = r"[-+]?\d+(?:\.\d+)?"
_TAGGED = re.compile(r"<\|box_start\|>(.*?)<\|box_end\|>", re.S)
_GROUP = re.compile(
    rf"[\[\(]\s*({_NUM})\s*,\s*({_NUM})(?:\s*,\s*({_NUM})\s*,\s*({_NUM}))?\s*[\]\)]"
)
_NOT_FOUND = re.compile(r"not\s+found|does\s+not\s+exist|no\s+such", re.I)


def parse_coordinates(text: str) -> tuple[str, BBox | Point | None]:
    """Extract the first box or point from model text.

    Accepts the tagged ``<|box_start|>...<|box_end|>`` form and bare
    ``[x1, y1, x2, y2]`` / ``[x, y]`` groups; the earliest parseable one wins.
    """
    candidates: list[tuple[int, list[float]]] = []
    for m in _TAGGED.finditer(text):
        nums = [float(v) for v in re.findall(_NUM, m.group(1))]
        if len(nums) in (2, 4):
            candidates.append((m.start(), nums))
    for m in _GROUP.finditer(text):
        nums = [float(v) for v in m.groups() if v is not None]
        candidates.append((m.start(), nums))
    if candidates:
        _, nums = min(candidates, key=lambda c: c[0])
        if len(nums) == 4:
            return "box", BBox.from_points(*nums)
        return "point", Point(nums[0], nums[1])
    if _NOT_FOUND.search(text):
        return "not_found", None
    raise MalformedResponse(f"no coordinates in reply: {text[:80]!r}", text)


# --- backends ----------------------------------------------------------------------------


def _norm(s: str | None) -> str:
    return " ".join((s or "").split()).casefold()


def resolve_reference(ref: ElementRef, annotations: Sequence[ElementAnnotation]) -> ElementAnnotation | None:
    """Find the unique annotation a parsed prompt refers to, or None."""
    if ref.opaque:
        return None
    panels = {a.panel: a.grid_pos for a in annotations if a.category == "subplot"}
    if ref.category == "subplot":
        if ref.row is not None:
            hits = [a for a in annotations if a.category == "subplot" and a.grid_pos == (ref.row, ref.col)]
        else:
            hits = [a for a in annotations if a.category == "subplot" and a.grid_pos is None]
            if not hits and len(panels) == 1:
                hits = [a for a in annotations if a.category == "subplot"]
        return hits[0] if len(hits) == 1 else None

    allowed: set[str | None] | None = None
    if ref.row is not None:
        allowed = {p for p, pos in panels.items() if pos == (ref.row, ref.col)}
        if not allowed:
            return None

    def ok(a: ElementAnnotation) -> bool:
        if allowed is not None and a.panel not in allowed:
            return False
        if a.category != ref.category:
            return False
        lid = a.local_id
        if ref.category == "axis_tick":
            return a.axis == ref.axis and a.axis_value is not None and abs(a.axis_value - ref.value) <= 1e-9 * max(1.0, abs(ref.value))
        if ref.category == "legend_region":
            if ref.role == "legend":
                return lid == "legend"
            return lid.startswith("legend_item:") and _norm(a.label_text) == _norm(ref.label)
        if ref.category == "text_label":
            if ref.role:
                return lid == ref.role
            return _norm(a.label_text) == _norm(ref.label)
        if ref.category == "geom_point":
            return a.label_text == ref.label
        return False

    hits = [a for a in annotations if ok(a)]
    if not hits and ref.category == "geom_point":
        hits = [a for a in annotations if a.category == "geom_point" and _norm(a.label_text) == _norm(ref.label)]
    return hits[0] if len(hits) == 1 else None


@dataclass
class OracleGrounder:
    """Answers prompts by looking up ground-truth annotations.

    Images are keyed by file path and by pixel digest; tool outputs registered
    through :func:`register_derived` inherit transformed annotations.
    """

    backend_id: str = "oracle"
    _by_key: dict[str, tuple[ElementAnnotation, ...]] = field(default_factory=dict, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def add(self, key: str | RasterImage, annotations: Iterable[ElementAnnotation]) -> None:
        k = key.digest if isinstance(key, RasterImage) else str(Path(key))
        with self._lock:
            self._by_key[k] = tuple(annotations)

    @classmethod
    def from_annotations(cls, image: RasterImage, annotations: Iterable[ElementAnnotation]) -> OracleGrounder:
        g = cls()
        g.add(image, annotations)
        return g

    @classmethod
    def from_manifest(cls, manifest: Manifest) -> OracleGrounder:
        g = cls()
        for e in manifest:
            g.add(str(manifest.resolve(e.image)), read_annotations(manifest.resolve(e.annotations)))
        return g

    def annotations_for(self, image: RasterImage | None, image_ref=None) -> tuple[ElementAnnotation, ...] | None:
        with self._lock:
            if isinstance(image_ref, str):
                hit = self._by_key.get(str(Path(image_ref)))
                if hit is not None:
                    return hit
            if image is not None:
                return self._by_key.get(image.digest)
        return None

    def derive(self, child: RasterImage, parent: RasterImage, mapper: AnnotationMapper, extra=()) -> None:
        base = self.annotations_for(parent)
        if base is None:
            return
        mapped = [m for m in (mapper(a) for a in base) if m is not None]
        self.add(child, list(mapped) + list(extra))

    def locate(self, image: RasterImage, request: GroundingRequest) -> GroundingResult:
        anns = self.annotations_for(image, request.image_ref)
        if anns is None:
            return GroundingResult.not_found(self.backend_id, "no annotations for image")
        hit = resolve_reference(parse_element_prompt(request.prompt), anns)
        if hit is None:
            return GroundingResult.not_found(self.backend_id)
        if hit.bbox is not None:
            return GroundingResult("box", self.backend_id, bbox=hit.bbox)
        return GroundingResult("point", self.backend_id, point=hit.point)


@dataclass
class PerturbedGrounder:
    """Shifts every result of an inner backend by ``offset`` px along both axes."""

    inner: GroundingBackend
    offset: float
    backend_id: str = ""

    def __post_init__(self) -> None:
        if not self.backend_id:
            self.backend_id = f"{self.inner.backend_id}+shift{self.offset:g}"

    def locate(self, image: RasterImage, request: GroundingRequest) -> GroundingResult:
        res = self.inner.locate(image, request)
        shifted = res.shifted(self.offset, self.offset)
        return GroundingResult(shifted.outcome, self.backend_id, shifted.bbox, shifted.point, shifted.raw_text)

    def derive(self, child, parent, mapper, extra=()) -> None:
        register_derived(self.inner, child, parent, mapper, extra)


@dataclass
class NullGrounder:
    """Never finds anything."""

    backend_id: str = "null"

    def locate(self, image: RasterImage, request: GroundingRequest) -> GroundingResult:
        return GroundingResult.not_found(self.backend_id)


GROUNDING_SYSTEM = (
    "You locate elements in chart and diagram images. Reply with absolute pixel "
    "coordinates: [x1, y1, x2, y2] for a region or [x, y] for a point. Reply "
    "\"Not found\" when the element is absent."
)


@dataclass
class RemoteGrounder:
    """Vision-language model behind an HTTP chat endpoint."""

    client: ChatClient
    backend_id: str = "remote"
    system_prompt: str = GROUNDING_SYSTEM

    def locate(self, image: RasterImage, request: GroundingRequest) -> GroundingResult:
        user = (
            "Find <|object_ref_start|>" + request.prompt + "<|object_ref_end|> in this image "
            "and give its pixel coordinates."
        )
        text = self.client.complete(self.system_prompt, user, [image])
        kind, geom = parse_coordinates(text)
        if kind == "box":
            return GroundingResult("box", self.backend_id, bbox=geom, raw_text=text)
        if kind == "point":
            return GroundingResult("point", self.backend_id, point=geom, raw_text=text)
        return GroundingResult.not_found(self.backend_id, raw_text=text)
