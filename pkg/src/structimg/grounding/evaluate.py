"""Grounding accuracy over an annotated corpus: IoU for regions, PCK@0.01 for points."""

from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from ..core import BOX_CATEGORIES, CATEGORIES, ElementAnnotation, Manifest, bbox_iou, load_png, pck_hit, read_annotations
from ..remote import BackendUnavailable
from .backends import GroundingBackend, GroundingRequest, MalformedResponse, ground
from .prompts import canonical_prompt, expected_kind, panel_grid

log = logging.getLogger(__name__)


class GroundingEvalError(RuntimeError):
    pass


@dataclass(frozen=True)
class GroundingReport:
    per_category: dict[str, float]
    n_per_category: dict[str, int]
    overall: float
    backend_id: str = ""
    n_samples: int = 0
    n_malformed: int = 0
    n_not_found: int = 0

    def to_json(self) -> dict:
        return {
            "backend_id": self.backend_id,
            "per_category": dict(self.per_category),
            "n_per_category": dict(self.n_per_category),
            "overall": self.overall,
            "n_samples": self.n_samples,
            "n_malformed": self.n_malformed,
            "n_not_found": self.n_not_found,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True) + "\n"


@dataclass
class _Tally:
    scores: dict[str, list[float]] = field(default_factory=lambda: {c: [] for c in CATEGORIES})
    malformed: int = 0
    not_found: int = 0


def score_annotation(result, ann: ElementAnnotation, width: int, height: int) -> float:
    """Score one grounding result against its ground-truth annotation."""
    if ann.category in BOX_CATEGORIES:
        if result.outcome != "box":
            return 0.0
        return bbox_iou(result.bbox, ann.bbox)
    if result.outcome != "point":
        return 0.0
    return 1.0 if pck_hit(result.point, ann.point, width, height) else 0.0


def _evaluate_entry(backend: GroundingBackend, manifest: Manifest, entry) -> _Tally:
    image_path = manifest.resolve(entry.image)
    anns = read_annotations(manifest.resolve(entry.annotations))
    image = load_png(image_path)
    grid = panel_grid(anns)
    tally = _Tally()
    for ann in anns:
        req = GroundingRequest(str(image_path), canonical_prompt(ann, grid), expected_kind(ann.category))
        try:
            res = ground(backend, req, image=image)
        except MalformedResponse:
            tally.malformed += 1
            tally.scores[ann.category].append(0.0)
            continue
        except BackendUnavailable as e:
            raise GroundingEvalError(f"{entry.image}: {ann.element_id}: {e}") from e
        if not res.found:
            tally.not_found += 1
        tally.scores[ann.category].append(score_annotation(res, ann, image.width, image.height))
    return tally


def evaluate_grounding(
    backend: GroundingBackend,
    manifest: Manifest | str | Path,
    sample_limit: int | None = None,
    max_in_flight: int = 1,
) -> GroundingReport:
    """Issue the canonical prompt for every annotation and aggregate per category.

    Scores are averaged per element within a category; ``overall`` is the
    unweighted mean over the categories present in the corpus.
    """
    if not isinstance(manifest, Manifest):
        manifest = Manifest.load(manifest)
    entries = list(manifest)[: sample_limit if sample_limit is not None else None]
    with ThreadPoolExecutor(max_workers=max(1, max_in_flight)) as pool:
        tallies = list(pool.map(lambda e: _evaluate_entry(backend, manifest, e), entries))

    per_category: dict[str, float] = {}
    counts: dict[str, int] = {}
    for cat in CATEGORIES:
        vals = [v for t in tallies for v in t.scores[cat]]
        if vals:
            per_category[cat] = math.fsum(vals) / len(vals)
            counts[cat] = len(vals)
    overall = math.fsum(per_category.values()) / len(per_category) if per_category else 0.0
    report = GroundingReport(
        per_category=per_category,
        n_per_category=counts,
        overall=overall,
        backend_id=backend.backend_id,
        n_samples=len(entries),
        n_malformed=sum(t.malformed for t in tallies),
        n_not_found=sum(t.not_found for t in tallies),
    )
    log.info("grounding %s: overall %.3f over %d samples", backend.backend_id, overall, len(entries))
    return report
