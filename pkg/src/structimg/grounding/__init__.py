from ..remote import BackendUnavailable
from .backends import (
    GroundingBackend,
    GroundingRequest,
    GroundingResult,
    MalformedResponse,
    NullGrounder,
    OracleGrounder,
    PerturbedGrounder,
    RemoteGrounder,
    ground,
    parse_coordinates,
    register_derived,
    resolve_reference,
)
from .evaluate import GroundingEvalError, GroundingReport, evaluate_grounding, score_annotation
from .prompts import ElementRef, canonical_prompt, expected_kind, format_value, panel_grid, parse_element_prompt

__all__ = [
    "BackendUnavailable",
    "ElementRef",
    "GroundingBackend",
    "GroundingEvalError",
    "GroundingReport",
    "GroundingRequest",
    "GroundingResult",
    "MalformedResponse",
    "NullGrounder",
    "OracleGrounder",
    "PerturbedGrounder",
    "RemoteGrounder",
    "canonical_prompt",
    "evaluate_grounding",
    "expected_kind",
    "format_value",
    "ground",
    "panel_grid",
    "parse_coordinates",
    "parse_element_prompt",
    "register_derived",
    "resolve_reference",
    "score_annotation",
]
