"""Dispatch, planner-driven discussion over image memory, and critic-driven refinement."""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from typing import Any, Mapping

from ..core import RasterImage
from ..grounding import GroundingBackend, MalformedResponse
from ..registry import ToolRegistry
from ..remote import BackendUnavailable
from ..toolkit import ToolError, ToolOutput
from .backends import AgentBackend, Backends
from .grammar import (
    UNPARSEABLE,
    Critique,
    CriticVerdict,
    ImageRef,
    ParseFailure,
    ParsedStep,
    Terminate,
    ToolCall,
    format_call,
    parse_action,
    parse_critique,
    parse_tool_list,
    parse_verdict,
)
from .memory import ImageMemory, UnknownImageId

log = logging.getLogger(__name__)

REASONER_ACTION = "ask_reasoner"
ROOT_DESCRIPTION = "original query image"

# keyword -> tool table used when the dispatcher reply has no bracketed list
FALLBACK_RULES: tuple[tuple[str, str], ...] = (
    (r"subplot|subfigure|panel|row \d|column \d", "Subfigure_Cropping"),
    (r"zoom|between|range|exact|precise|close", "Region_Magnification"),
    (r"legend|series|colou?r|line for|bar for", "Masking_Data_with_Legend"),
    (r"above|below|exceed|threshold|greater|less|higher|lower", "Adding_Auxiliary_Lines"),
    (r"connect|segment|join", "Point_Connection"),
    (r"perpendicular|altitude|height|distance from", "Perpendicular_Line_Construction"),
    (r"parallel", "Parallel_Line_Construction"),
    (r"calculate|compute|sum|difference|ratio|area|length|angle|how much|how many", "Code_Execution"),
)

_SLOT = re.compile(r"\{([a-z_]+)\}")


@lru_cache(maxsize=None)
def load_template(name: str) -> str:
    return resources.files(__package__).joinpath("prompts", f"{name}.txt").read_text(encoding="utf-8")


def render(name: str, **slots: Any) -> str:
    """Fill ``{slot}`` markers whose names are given; other braces are left alone."""
    return _SLOT.sub(lambda m: str(slots[m.group(1)]) if m.group(1) in slots else m.group(0), load_template(name))


@dataclass(frozen=True)
class WorkflowConfig:
    max_steps: int = 10
    max_rounds: int = 3
    format_retries: int = 2
    verbose: bool = False

    def __post_init__(self) -> None:
        if self.max_steps < 1 or self.max_rounds < 1 or self.format_retries < 0:
            raise ValueError("max_steps and max_rounds must be >= 1, format_retries >= 0")


# --- dispatch ------------------------------------------------------------------------------


@dataclass(frozen=True)
class DispatchResult:
    tools: tuple[str, ...]
    fallback: bool
    raw: str

    def to_json(self) -> dict:
        return {"tools": list(self.tools), "fallback": self.fallback, "raw": self.raw}


def fallback_tools(query: str, registry: ToolRegistry) -> list[str]:
    q = query.lower()
    hits = {tool for pattern, tool in FALLBACK_RULES if re.search(pattern, q)}
    return [n for n in registry.names if n in hits]


def dispatch(query: str, image: RasterImage, registry: ToolRegistry, backend: AgentBackend) -> DispatchResult:
    if not len(registry):
        raise ValueError("dispatch needs a non-empty registry")
    prompt = render(
        "dispatcher",
        tool_descriptions=registry.descriptions(),
        question=query,
        image_meta=f"{image.width}x{image.height} pixels",
    )
    raw = backend.complete("dispatcher", "", prompt, [image])
    names = parse_tool_list(raw)
    if names is None:
        return DispatchResult(tuple(fallback_tools(query, registry)), True, raw)
    return DispatchResult(tuple(registry.normalize(names)), False, raw)


# --- visual critic -------------------------------------------------------------------------


def visual_critic_check(backend: AgentBackend, image: RasterImage, text: str, mode: str, description: str = "") -> CriticVerdict:
    """Ask the critic about one image; an unreadable reply passes (fail-open)."""
    if mode == "answerability":
        prompt = render("visual_critic_answerability", question=text)
    elif mode == "goal_satisfaction":
        prompt = render("visual_critic_goal", goal=text, description=description or "(none)")
    else:
        raise ValueError(f"unknown critic mode {mode!r}")
    reply = backend.complete("visual_critic", "", prompt, [image])
    verdict = parse_verdict(reply)
    if verdict is None:
        return CriticVerdict(True, UNPARSEABLE, parsed=False)
    return CriticVerdict(verdict, reply.strip())


# --- episode -------------------------------------------------------------------------------


@dataclass
class Step:
    index: int
    thought: str
    action: str | None
    observation: str
    images_in: list[str] = field(default_factory=list)
    images_out: list[str] = field(default_factory=list)
    images_shown: list[str] = field(default_factory=list)
    critic: dict | None = None
    format_retries: int = 0
    terminate: bool = False

    def to_json(self) -> dict:
        return {
            "index": self.index,
            "thought": self.thought,
            "action": self.action,
            "observation": self.observation,
            "images_in": self.images_in,
            "images_out": self.images_out,
            "images_shown": self.images_shown,
            "critic": self.critic,
            "format_retries": self.format_retries,
            "terminate": self.terminate,
        }

    def transcript(self) -> str:
        lines = []
        if self.thought:
            lines.append(f"THOUGHT {self.index}: {self.thought}")
        lines.append(f"ACTION {self.index}: {self.action if self.action is not None else '(unparseable)'}")
        lines.append(f"OBSERVATION {self.index}: {self.observation}")
        return "\n".join(lines)


@dataclass
class Trace:
    question: str
    tools: list[str]
    steps: list[Step]
    final_answer: str | None
    memory: ImageMemory
    prompts: list[dict] = field(default_factory=list)

    def transcript(self) -> str:
        body = "\n".join(s.transcript() for s in self.steps) or "(no steps)"
        answer = self.final_answer if self.final_answer is not None else "(none: step budget exhausted)"
        return f"{body}\nFINAL ANSWER: {answer}"

    def to_json(self, verbose: bool = False) -> dict:
        out = {
            "question": self.question,
            "tools": list(self.tools),
            "steps": [s.to_json() for s in self.steps],
            "final_answer": self.final_answer,
            "memory": self.memory.to_json(),
        }
        if verbose:
            out["prompts"] = self.prompts
        return out


def _history(steps: list[Step]) -> str:
    return "\n".join(s.transcript() for s in steps) if steps else "(none yet)"


def _suggestion_block(suggestions: list[str]) -> str:
    if not suggestions:
        return ""
    items = "\n".join(f"- {s}" for s in suggestions)
    return f"\nReviewer suggestions from earlier attempts:\n{items}\n"


_TOOL_FAILURES = (ToolError, ValueError, KeyError, ArithmeticError, BackendUnavailable, MalformedResponse)


class _Episode:
    def __init__(self, query, root_image, backends, registry, grounding, config, memory, suggestions, full_registry):
        self.query = query
        self.backends = backends
        self.registry = registry
        self.full = full_registry or registry
        self.grounding = grounding
        self.config = config
        self.memory = memory
        self.suggestions = suggestions
        self.steps: list[Step] = []
        self.prompts: list[dict] = []
        if root_image is not None:
            memory.put(root_image, ROOT_DESCRIPTION)

    def planner_prompt(self, index: int, shown: list[str]) -> str:
        return render(
            "planner",
            question=self.query,
            tool_descriptions=self.registry.descriptions() or "(no tools selected; use ask_reasoner)",
            image_pool=self.memory.pool_listing(),
            attached=", ".join(shown) or "none",
            history=_history(self.steps),
            suggestions=_suggestion_block(self.suggestions),
            step=index,
        )

    def ask_planner(self, index: int, shown: list[str]) -> tuple[ParsedStep | None, int, str]:
        prompt = self.planner_prompt(index, shown)
        images = [self.memory.get(i).image for i in shown]
        error = ""
        for attempt in range(self.config.format_retries + 1):
            reply = self.backends.planner.complete("planner", "", prompt, images)
            self.prompts.append({"role": "planner", "step": index, "attempt": attempt, "prompt": prompt, "images": list(shown)})
            try:
                return parse_action(reply), attempt, ""
            except ParseFailure as e:
                error = str(e)
                prompt = prompt + "\n\n" + render("format_reminder", error=error, step=index)
        return None, self.config.format_retries, error

    def run(self) -> Trace:
        shown = [self.memory.root] if self.memory.root else []
        final = None
        for index in range(1, self.config.max_steps + 1):
            parsed, retries, error = self.ask_planner(index, shown)
            if parsed is None:
                self.steps.append(Step(index, "", None, f"format error, step skipped: {error}", images_shown=shown, format_retries=retries))
                shown = []
                continue
            action = parsed.action
            if isinstance(action, Terminate):
                final = action.answer
                obs = f"terminated with answer {final}" if final is not None else "terminated without a final answer"
                self.steps.append(Step(index, parsed.thought, "TERMINATE", obs, images_shown=shown, format_retries=retries, terminate=True))
                break
            step = self.execute(index, parsed.thought, action)
            step.images_shown = shown
            step.format_retries = retries
            self.steps.append(step)
            shown = [i for i in dict.fromkeys(step.images_in + step.images_out) if i in self.memory]
        self.memory.check_tree()
        return Trace(self.query, list(self.registry.names), self.steps, final, self.memory, self.prompts)

    def _resolve(self, call: ToolCall) -> dict[str, Any]:
        out = {}
        for k, v in call.args:
            out[k] = self.memory.get(v.image_id).image if isinstance(v, ImageRef) else v
        return out

    def execute(self, index: int, thought: str, call: ToolCall) -> Step:
        text = format_call(call)
        ids = call.image_ids()
        step = Step(index, thought, text, "", images_in=[i for i in ids if i in self.memory])
        try:
            args = self._resolve(call)
        except UnknownImageId as e:
            step.observation = f"error: {e}"
            return step
        if call.tool_name == REASONER_ACTION:
            step.observation, step.critic = self.ask_reasoner(call, args)
            return step
        spec = self.registry.lookup(call.tool_name)
        if spec is None:
            if self.full.lookup(call.tool_name) is not None:
                step.observation = f"error: tool {call.tool_name!r} is not available in this round"
            else:
                step.observation = f"error: unknown tool {call.tool_name!r}"
            return step
        try:
            result = spec.run(spec.bind(args), self.grounding)
        except _TOOL_FAILURES as e:
            step.observation = f"error: {spec.function} failed: {type(e).__name__}: {e}"
            return step
        if not isinstance(result, ToolOutput):
            step.observation = f"result: {result}"
            return step
        parent = ids[0] if ids else self.memory.root
        verdict = visual_critic_check(self.backends.visual_critic, result.image, thought or text, "goal_satisfaction", result.description)
        step.critic = verdict.to_json()
        new_id = self.memory.put(result.image, result.description, parent, text, rejected=not verdict.passed)
        step.images_out = [new_id]
        if verdict.passed:
            step.observation = f"{new_id}: {result.description}"
        else:
            step.observation = f"error alert: visual critic rejected {new_id} ({result.description}): {verdict.reason}"
        return step

    def ask_reasoner(self, call: ToolCall, args: Mapping[str, Any]) -> tuple[str, dict | None]:
        ids = call.image_ids()
        query = args.get("query")
        if len(ids) != 1 or "image" not in args or not isinstance(query, str) or not query.strip():
            return "error: ask_reasoner needs image=<image id> and query=\"...\"", None
        entry = self.memory.get(ids[0])
        if entry.rejected:
            return f"refused: {entry.image_id} was rejected by the visual critic and cannot be sent to the reasoner", None
        verdict = visual_critic_check(self.backends.visual_critic, entry.image, query, "answerability")
        if not verdict.passed:
            return f"error alert: visual critic judged {entry.image_id} insufficient for {query!r}: {verdict.reason}", verdict.to_json()
        answer = self.backends.reasoner.complete("reasoner", load_template("reasoner_system").strip(), query, [entry.image])
        return f"reasoner: {answer.strip()}", verdict.to_json()


def run_episode(
    query: str,
    root_image: RasterImage,
    backends: Backends,
    registry: ToolRegistry,
    grounding: GroundingBackend,
    config: WorkflowConfig = WorkflowConfig(),
    memory: ImageMemory | None = None,
    suggestions: list[str] | None = None,
    full_registry: ToolRegistry | None = None,
) -> Trace:
    """Run the planner loop until TERMINATE or the step budget runs out.

    ``registry`` holds the tools selected for this round; ``full_registry`` is
    used only to tell "not selected" apart from "unknown" in observations.
    """
    memory = memory if memory is not None else ImageMemory()
    root = root_image if len(memory) == 0 else None
    return _Episode(query, root, backends, registry, grounding, config, memory, list(suggestions or []), full_registry).run()


# --- planning critic and refinement --------------------------------------------------------


def planning_critic_review(backend: AgentBackend, trace: Trace, registry: ToolRegistry, image: RasterImage | None = None) -> Critique:
    prompt = render(
        "planning_critic",
        tool_descriptions=registry.descriptions(),
        question=trace.question,
        current_plan=trace.transcript(),
    )
    root = image if image is not None else trace.memory.get(trace.memory.root).image
    critique = parse_critique(backend.complete("planning_critic", "", prompt, [root]))
    if critique.tools is not None:
        critique = Critique(True, tuple(registry.normalize(critique.tools)), critique.suggestions)
    return critique


@dataclass
class RoundRecord:
    round: int
    tools: list[str]
    trace: Trace
    critique: Critique

    def to_json(self, verbose: bool = False) -> dict:
        return {
            "round": self.round,
            "tools": list(self.tools),
            "trace": self.trace.to_json(verbose),
            "critique": self.critique.to_json(),
            "final_answer": self.trace.final_answer,
        }


@dataclass
class RefineResult:
    question: str
    dispatch: DispatchResult
    rounds: list[RoundRecord]

    @property
    def final_answer(self) -> str | None:
        return self.rounds[-1].trace.final_answer

    @property
    def final_trace(self) -> Trace:
        return self.rounds[-1].trace

    @property
    def rounds_used(self) -> int:
        return len(self.rounds)

    def to_json(self, verbose: bool = False) -> dict:
        return {
            "question": self.question,
            "dispatch": self.dispatch.to_json(),
            "rounds": [r.to_json(verbose) for r in self.rounds],
            "rounds_used": self.rounds_used,
            "final_answer": self.final_answer,
        }

    def dumps(self, verbose: bool = False) -> str:
        return json.dumps(self.to_json(verbose), indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def refine_loop(
    query: str,
    root_image: RasterImage,
    backends: Backends,
    registry: ToolRegistry,
    grounding: GroundingBackend,
    config: WorkflowConfig = WorkflowConfig(),
) -> RefineResult:
    """Dispatch once, then alternate episodes and planning-critic reviews.

    Each round starts from a fresh memory. A critique with ``tools`` replaces
    the tool set; suggestions from every adjusting round are carried forward.
    """
    disp = dispatch(query, root_image, registry, backends.dispatcher)
    tools = list(disp.tools)
    suggestions: list[str] = []
    rounds: list[RoundRecord] = []
    for r in range(1, config.max_rounds + 1):
        trace = run_episode(query, root_image, backends, registry.subset(tools), grounding, config, suggestions=suggestions, full_registry=registry)
        critique = planning_critic_review(backends.planning_critic, trace, registry, root_image)
        rounds.append(RoundRecord(r, list(tools), trace, critique))
        log.info("round %d: answer=%r adjustment=%s", r, trace.final_answer, critique.adjustment)
        if not critique.adjustment:
            break
        if critique.tools is not None:
            tools = list(critique.tools)
        if critique.suggestions:
            suggestions.append(f"round {r}: {critique.suggestions}")
    return RefineResult(query, disp, rounds)
