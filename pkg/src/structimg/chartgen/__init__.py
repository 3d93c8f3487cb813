from .compose import LayoutOverflow, PanelLayout, compose_multipanel, plan_layout
from .export import CorpusWriteError, export_corpus, synth_single
from .render import AxisMap, CanvasTooSmall, RenderedChart, format_tick, render_chart, value_to_pixel
from .spec import CHART_KINDS, ChartSpec, Series, generate_chart_spec

__all__ = [
    "AxisMap",
    "CHART_KINDS",
    "CanvasTooSmall",
    "ChartSpec",
    "CorpusWriteError",
    "LayoutOverflow",
    "PanelLayout",
    "RenderedChart",
    "Series",
    "compose_multipanel",
    "export_corpus",
    "format_tick",
    "generate_chart_spec",
    "plan_layout",
    "render_chart",
    "synth_single",
    "value_to_pixel",
]
