"""Corpus export: single-panel charts plus multi-panel composites, PNG + JSONL."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from ..core import Manifest, ManifestEntry, save_png, write_annotations
from .compose import MAX_PANELS, MIN_PANELS, compose_multipanel
from .render import CanvasTooSmall, RenderedChart, render_chart
from .spec import CHART_KINDS, generate_chart_spec

log = logging.getLogger(__name__)

SINGLE_PER_MULTI = 5


class CorpusWriteError(OSError):
    pass


def chart_seed(seed: int, index: int, attempt: int = 0) -> int:
    return int(np.random.SeedSequence([seed, index, attempt]).generate_state(1)[0])


def synth_single(seed: int, index: int) -> RenderedChart:
    kind = CHART_KINDS[index % len(CHART_KINDS)]
    for attempt in range(10):
        spec = generate_chart_spec(chart_seed(seed, index, attempt), kind)
        try:
            return render_chart(spec)
        except CanvasTooSmall:
            log.debug("sample %d attempt %d does not fit, resampling", index, attempt)
    raise CanvasTooSmall(f"could not fit sample {index} after 10 attempts")


def _write(path: Path, fn, *args) -> None:
    try:
        fn(*args, path)
    except OSError as e:
        raise CorpusWriteError(f"failed to write {path}: {e}") from e


def export_corpus(n: int, seed: int, out_dir: str | Path, workers: int = 1) -> Path:
    """Write ``n`` single-panel and ``ceil(n / 5)`` composite samples; returns the manifest path."""
    if n < 1:
        raise ValueError("n must be >= 1")
    out = Path(out_dir)
    try:
        (out / "images").mkdir(parents=True, exist_ok=True)
        (out / "annotations").mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise CorpusWriteError(f"cannot create corpus directories under {out}: {e}") from e

    def make_single(i: int) -> tuple[ManifestEntry, RenderedChart]:
        chart = synth_single(seed, i)
        entry = ManifestEntry(f"images/single_{i:05d}.png", f"annotations/single_{i:05d}.jsonl", "single")
        _write(out / entry.image, lambda img, p: save_png(img, p), chart.image)
        _write(out / entry.annotations, lambda a, p: write_annotations(a, p), chart.annotations)
        return entry, chart

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        singles = list(pool.map(make_single, range(n)))

    n_multi = math.ceil(n / SINGLE_PER_MULTI)

    def make_multi(j: int) -> ManifestEntry:
        rng = np.random.default_rng(np.random.SeedSequence([seed, 0x6D756C74, j]))
        k = int(rng.integers(MIN_PANELS, MAX_PANELS + 1))
        picks = rng.integers(0, n, size=k)
        panels = [(singles[i][1].image, singles[i][1].annotations) for i in picks]
        image, anns = compose_multipanel(panels, seed=chart_seed(seed, j, 0x636F6D70))
        entry = ManifestEntry(f"images/multi_{j:05d}.png", f"annotations/multi_{j:05d}.jsonl", "multi")
        _write(out / entry.image, lambda img, p: save_png(img, p), image)
        _write(out / entry.annotations, lambda a, p: write_annotations(a, p), anns)
        return entry

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        multis = list(pool.map(make_multi, range(n_multi)))

    manifest = Manifest(seed=seed, entries=tuple(e for e, _ in singles) + tuple(multis), root=out)
    path = out / "manifest.json"
    try:
        manifest.write(path)
    except OSError as e:
        raise CorpusWriteError(f"failed to write {path}: {e}") from e
    log.info("wrote %d single + %d multi samples to %s", n, n_multi, out)
    return path
