from .construct import (
    CoincidentPoints,
    DegenerateLine,
    clip_line,
    connect_points,
    construct_parallel,
    construct_perpendicular,
    foot_of_perpendicular,
)
from .diagram import GeomDiagram, LineRef, diagram_from_records, point_annotation
from .expr import MathDomain, ParseError, eval_expression, parse_expression, pretty

__all__ = [
    "CoincidentPoints",
    "DegenerateLine",
    "GeomDiagram",
    "LineRef",
    "MathDomain",
    "ParseError",
    "clip_line",
    "connect_points",
    "construct_parallel",
    "construct_perpendicular",
    "diagram_from_records",
    "eval_expression",
    "foot_of_perpendicular",
    "parse_expression",
    "point_annotation",
    "pretty",
]
