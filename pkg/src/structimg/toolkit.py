"""Types shared by the chart and geometry tool agents."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

from .core import RasterImage
from .grounding import GroundingBackend, GroundingRequest, GroundingResult, ground


class ToolError(Exception):
    """A tool could not produce an output; the message is shown to the planner."""


class GroundingMiss(ToolError):
    pass


@dataclass(frozen=True, eq=False)
class ToolOutput:
    image: RasterImage
    description: str
    provenance: dict[str, Any]
    data: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.description:
            raise ValueError("tool output needs a description")


class GroundingLog:
    """Wraps a backend for one tool call and records every request made."""

    def __init__(self, backend: GroundingBackend, image: RasterImage) -> None:
        self.backend = backend
        self.image = image
        self.calls: list[dict[str, Any]] = []

    def __call__(self, prompt: str, kind: str = "any") -> GroundingResult:
        res = ground(self.backend, GroundingRequest(self.image, prompt, kind), image=self.image)
        self.calls.append({"prompt": prompt, "result": res.to_json()})
        return res

    def box(self, prompt: str):
        res = self(prompt, "box")
        if res.outcome != "box":
            raise GroundingMiss(f"could not locate {prompt!r}")
        return res.bbox

    def point(self, prompt: str):
        res = self(prompt, "point")
        if res.outcome == "point":
            return res.point
        if res.outcome == "box":
            return res.bbox.center
        raise GroundingMiss(f"could not locate {prompt!r}")

    def provenance(self, tool: str, **arguments: Any) -> dict[str, Any]:
        return {"tool": tool, "arguments": arguments, "grounding": list(self.calls)}
