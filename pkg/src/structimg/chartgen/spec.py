"""Seeded content sampler for single-panel charts."""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from typing import Literal

import numpy as np

from ..core import ColorRGB, color_distance

ChartKind = Literal["line", "bar", "scatter"]
LegendPosition = Literal["inside_top_right", "right_of_axes", "below_axes"]

CHART_KINDS: tuple[str, ...] = ("line", "bar", "scatter")
LEGEND_POSITIONS: tuple[str, ...] = ("inside_top_right", "right_of_axes", "below_axes")
DEFAULT_CANVAS = (640, 480)
MIN_SERIES_DISTANCE = 60.0

# kept >= 70 away from pure white and black so text/background filtering never eats data
PALETTE: tuple[tuple[int, int, int], ...] = (
    (31, 119, 180),
    (255, 127, 14),
    (44, 160, 44),
    (214, 39, 40),
    (148, 103, 189),
    (140, 86, 75),
    (227, 119, 194),
    (127, 127, 127),
    (188, 189, 34),
    (23, 190, 207),
)

_TOPICS = (
    "Revenue", "Latency", "Accuracy", "Rainfall", "Traffic", "Energy Use", "Growth",
    "Throughput", "Yield", "Demand", "Error Rate", "Output", "Loss", "Coverage",
)
_X_NAMES = ("Year", "Epoch", "Month", "Step", "Hour", "Batch Size", "Day", "Load", "Depth")
_UNITS = ("", " (%)", " (ms)", " ($M)", " (kWh)", " (K)", " (mm)")
_SERIES = (
    "Alpha", "Beta", "Gamma", "Delta", "Group A", "Group B", "Model X", "Model Y",
    "North", "South", "East", "West", "Base", "Ours", "Control", "Treated",
)
_TITLE_FORMS = ("{y} by {x}", "{y} over {x}", "{y} vs {x}", "Trends in {y}", "{y} per {x}")
_NICE_STEPS = (0.5, 1, 2, 5, 10, 20, 25, 50, 100)


@dataclass(frozen=True)
class Series:
    name: str
    color: ColorRGB
    points: tuple[tuple[float, float], ...]


@dataclass(frozen=True)
class ChartSpec:
    chart_kind: ChartKind
    title: str
    x_label: str
    y_label: str
    series: tuple[Series, ...]
    x_ticks: tuple[float, ...]
    y_ticks: tuple[float, ...]
    legend_position: LegendPosition = "right_of_axes"
    canvas: tuple[int, int] = DEFAULT_CANVAS
    seed: int = 0

    def __post_init__(self) -> None:
        if self.chart_kind not in CHART_KINDS:
            raise ValueError(f"unknown chart kind {self.chart_kind!r}")
        if self.legend_position not in LEGEND_POSITIONS:
            raise ValueError(f"unknown legend position {self.legend_position!r}")
        if not self.series:
            raise ValueError("chart needs at least one series")
        for name, ticks in (("x", self.x_ticks), ("y", self.y_ticks)):
            if len(ticks) < 2:
                raise ValueError(f"{name} axis needs at least two ticks")
            if any(b <= a for a, b in zip(ticks, ticks[1:])):
                raise ValueError(f"{name} ticks must be strictly increasing")
        names = [s.name for s in self.series]
        if len(set(names)) != len(names):
            raise ValueError("series names must be unique")
        for a, b in itertools.combinations(self.series, 2):
            if color_distance(a.color, b.color) < MIN_SERIES_DISTANCE:
                raise ValueError(f"series colors {a.name!r} and {b.name!r} are too close")

    def to_json(self) -> dict:
        return {
            "chart_kind": self.chart_kind,
            "title": self.title,
            "x_label": self.x_label,
            "y_label": self.y_label,
            "series": [
                {"name": s.name, "color": list(s.color.as_tuple()), "points": [list(p) for p in s.points]}
                for s in self.series
            ],
            "x_ticks": list(self.x_ticks),
            "y_ticks": list(self.y_ticks),
            "legend_position": self.legend_position,
            "canvas": list(self.canvas),
            "seed": self.seed,
        }

    def to_bytes(self) -> bytes:
        return json.dumps(self.to_json(), sort_keys=True).encode()

    @classmethod
    def from_json(cls, d: dict) -> ChartSpec:
        return cls(
            chart_kind=d["chart_kind"],
            title=d["title"],
            x_label=d["x_label"],
            y_label=d["y_label"],
            series=tuple(
                Series(s["name"], ColorRGB(*s["color"]), tuple(tuple(p) for p in s["points"]))
                for s in d["series"]
            ),
            x_ticks=tuple(d["x_ticks"]),
            y_ticks=tuple(d["y_ticks"]),
            legend_position=d["legend_position"],
            canvas=tuple(d["canvas"]),
            seed=d["seed"],
        )


def _rng(seed: int, *salt: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, *salt]))


def _ticks(rng: np.random.Generator, count: int, start_choices) -> tuple[float, ...]:
    step = float(rng.choice(_NICE_STEPS))
    start = float(rng.choice(start_choices)) * step
    return tuple(round(start + i * step, 6) for i in range(count))


def _pick_colors(rng: np.random.Generator, k: int) -> list[ColorRGB]:
    while True:
        idx = rng.choice(len(PALETTE), size=k, replace=False)
        cols = [ColorRGB(*PALETTE[i]) for i in idx]
        if all(color_distance(a, b) >= MIN_SERIES_DISTANCE for a, b in itertools.combinations(cols, 2)):
            return cols


def _r(v: float) -> float:
    return round(float(v), 2)


def generate_chart_spec(seed: int, kind: ChartKind, canvas: tuple[int, int] = DEFAULT_CANVAS) -> ChartSpec:
    """Deterministically sample a chart description from ``(seed, kind)``."""
    if kind not in CHART_KINDS:
        raise ValueError(f"unknown chart kind {kind!r}")
    rng = _rng(seed, CHART_KINDS.index(kind))
    topic = str(rng.choice(_TOPICS))
    x_name = str(rng.choice(_X_NAMES))
    title = str(rng.choice(_TITLE_FORMS)).format(y=topic, x=x_name)
    y_label = topic + str(rng.choice(_UNITS))
    x_label = x_name
    if title in (x_label, y_label):
        title = "Chart of " + title

    n_series = int(rng.integers(1, 5))
    names = [str(n) for n in rng.choice(_SERIES, size=n_series, replace=False)]
    colors = _pick_colors(rng, n_series)

    x_ticks = _ticks(rng, int(rng.integers(4, 8)), (0, 0, 1, 2, 10))
    y_ticks = _ticks(rng, int(rng.integers(4, 7)), (0,) if kind == "bar" else (0, 0, -1, 1, 4))
    x0, x1 = x_ticks[0], x_ticks[-1]
    y0, y1 = y_ticks[0], y_ticks[-1]
    ys = y1 - y0

    series = []
    for name, color in zip(names, colors):
        if kind == "line":
            n = int(rng.integers(5, 13))
            xs = np.linspace(x0, x1, n)
            walk = np.cumsum(rng.normal(0, 0.12, n)) + rng.uniform(0.3, 0.7)
            yv = y0 + np.clip(walk, 0.05, 0.95) * ys
            pts = [(_r(a), _r(b)) for a, b in zip(xs, yv)]
        elif kind == "scatter":
            n = int(rng.integers(8, 26))
            xs = rng.uniform(0.04, 0.96, n) * (x1 - x0) + x0
            yv = rng.uniform(0.04, 0.96, n) * ys + y0
            pts = sorted((_r(a), _r(b)) for a, b in zip(xs, yv))
        else:
            mids = [(a + b) / 2 for a, b in zip(x_ticks, x_ticks[1:])]
            yv = rng.uniform(0.1, 0.95, len(mids)) * ys + y0
            pts = [(_r(a), _r(b)) for a, b in zip(mids, yv)]
        series.append(Series(name, color, tuple(pts)))

    return ChartSpec(
        chart_kind=kind,
        title=title,
        x_label=x_label,
        y_label=y_label,
        series=tuple(series),
        x_ticks=x_ticks,
        y_ticks=y_ticks,
        legend_position=str(rng.choice(LEGEND_POSITIONS)),
        canvas=tuple(canvas),
        seed=int(seed),
    )
