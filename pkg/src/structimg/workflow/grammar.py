"""Parsers and formatters for the agents' reply grammars.

Planner:   ``THOUGHT n: ...`` / ``ACTION n: tool(key=value, ...)`` / ``FINAL ANSWER: ...`` + ``ACTION n: TERMINATE``
Dispatcher: a bracketed tool list, ``[Tool_A, Tool_B]`` or ``[]``
Critic:    ``ADJUSTMENT: True|False``, optional ``tools: [...]``, free-text suggestions
Visual critic: ``true`` / ``false``

Every parser is total: it returns a value or raises its own failure type.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Union

UNPARSEABLE = "critic-unparseable"


class ParseFailure(ValueError):
    def __init__(self, message: str, text: str) -> None:
        super().__init__(message)
        self.text = text


@dataclass(frozen=True)
class ImageRef:
    image_id: str

    def __str__(self) -> str:
        return self.image_id


class BareWord(str):
    """An unquoted string argument; it formats back without quotes."""


ArgValue = Union[str, int, float, ImageRef]


@dataclass(frozen=True)
class ToolCall:
    tool_name: str
    args: tuple[tuple[str, ArgValue], ...] = ()

    @property
    def kwargs(self) -> dict[str, ArgValue]:
        return dict(self.args)

    def image_ids(self) -> list[str]:
        return [v.image_id for _, v in self.args if isinstance(v, ImageRef)]


@dataclass(frozen=True)
class Terminate:
    answer: str | None = None


Action = Union[ToolCall, Terminate]


@dataclass(frozen=True)
class ParsedStep:
    thought: str
    action: Action
    step: int | None = None


_MARK = re.compile(r"^[ \t]*(THOUGHT|ACTION|OBSERVATION)[ \t]*(\d*)[ \t]*:", re.M | re.I)
_FINAL = re.compile(r"^[ \t]*FINAL[ \t]+ANSWER[ \t]*:[ \t]*(.*)$", re.M | re.I)
_CALL = re.compile(r"^([A-Za-z_][\w.]*)\s*\((.*)\)\s*\.?$", re.S)
_IMG = re.compile(r"img_\d+")
_INT = re.compile(r"[-+]?\d+")
_FLOAT = re.compile(r"[-+]?(?:\d+\.\d*|\.\d+|\d+)(?:[eE][-+]?\d+)?")
_UNESCAPE = {"n": "\n", "t": "\t", "r": "\r"}
_ESCAPE = {"\\": "\\\\", '"': '\\"', "\n": "\\n", "\t": "\\t", "\r": "\\r"}
_KEY = re.compile(r"\s*([A-Za-z_]\w*)\s*=\s*")


def _parse_args(body: str, text: str) -> tuple[tuple[str, ArgValue], ...]:
    args: list[tuple[str, ArgValue]] = []
    i, n = 0, len(body)
    while True:
        while i < n and body[i].isspace():
            i += 1
        if i >= n:
            break
        m = _KEY.match(body, i)
        if m is None:
            raise ParseFailure(f"expected key=value in arguments near {body[i:i + 20]!r}", text)
        key = m.group(1)
        if any(k == key for k, _ in args):
            raise ParseFailure(f"duplicate argument {key!r}", text)
        i = m.end()
        if i < n and body[i] in "\"'":
            quote = body[i]
            i += 1
            buf = []
            while i < n and body[i] != quote:
                if body[i] == "\\" and i + 1 < n:
                    i += 1
                    buf.append(_UNESCAPE.get(body[i], body[i]))
                else:
                    buf.append(body[i])
                i += 1
            if i >= n:
                raise ParseFailure("unterminated string argument", text)
            i += 1
            value: ArgValue = "".join(buf)
        else:
            j = i
            while j < n and body[j] != ",":
                j += 1
            raw = body[i:j].strip()
            if not raw:
                raise ParseFailure(f"empty value for {key!r}", text)
            i = j
            value = _scalar(raw)
        args.append((key, value))
        while i < n and body[i].isspace():
            i += 1
        if i < n:
            if body[i] != ",":
                raise ParseFailure(f"expected ',' after argument {key!r}", text)
            i += 1
    return tuple(args)


def _scalar(raw: str) -> ArgValue:
    if _IMG.fullmatch(raw):
        return ImageRef(raw)
    if _INT.fullmatch(raw):
        return int(raw)
    if _FLOAT.fullmatch(raw):
        v = float(raw)
        if math.isfinite(v):
            return v
    return BareWord(raw)


def _action_text(text: str, start: int) -> str:
    end = text.find("\n", start)
    line = text[start:] if end < 0 else text[start:end]
    return line.strip()


def parse_action(text: str) -> ParsedStep:
    """Extract the last THOUGHT/ACTION pair from a planner reply."""
    if not isinstance(text, str):
        raise ParseFailure("reply is not text", repr(text))
    marks = list(_MARK.finditer(text))
    actions = [m for m in marks if m.group(1).upper() == "ACTION"]
    if not actions:
        raise ParseFailure("reply has no ACTION line", text)
    act = actions[-1]
    body = _action_text(text, act.end())
    step = int(act.group(2)) if act.group(2) else None

    thought = ""
    before = [m for m in marks if m.start() < act.start()]
    if before and before[-1].group(1).upper() == "THOUGHT":
        t = before[-1]
        chunk = text[t.end() : act.start()]
        thought = _FINAL.sub("", chunk).strip()

    answers = [m.group(1).strip() for m in _FINAL.finditer(text[: act.start()])]
    if re.fullmatch(r"TERMINATE\.?", body, re.I):
        return ParsedStep(thought, Terminate(answers[-1] if answers else None), step)
    m = _CALL.match(body)
    if m is None:
        raise ParseFailure(f"ACTION is neither TERMINATE nor tool(key=value): {body[:60]!r}", text)
    return ParsedStep(thought, ToolCall(m.group(1), _parse_args(m.group(2), text)), step)


def format_value(v: ArgValue) -> str:
    if isinstance(v, ImageRef):
        return v.image_id
    if isinstance(v, bool):
        return f'"{v}"'
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, BareWord) and _scalar(str(v)) == v and _bare_safe(v):
        return str(v)
    return '"' + "".join(_ESCAPE.get(ch, ch) for ch in str(v)) + '"'


def _bare_safe(v: str) -> bool:
    return bool(v) and v == v.strip() and not any(ch in v for ch in ",\"'()\n\r\t\\")


def format_call(call: ToolCall) -> str:
    return f"{call.tool_name}({', '.join(f'{k}={format_value(v)}' for k, v in call.args)})"


def format_action(parsed: ParsedStep) -> str:
    n = parsed.step if parsed.step is not None else 1
    lines = []
    if parsed.thought:
        lines.append(f"THOUGHT {n}: {parsed.thought}")
    if isinstance(parsed.action, Terminate):
        if parsed.action.answer is not None:
            lines.append(f"FINAL ANSWER: {parsed.action.answer}")
        lines.append(f"ACTION {n}: TERMINATE")
    else:
        lines.append(f"ACTION {n}: {format_call(parsed.action)}")
    return "\n".join(lines)


# --- tool lists ----------------------------------------------------------------------------

_LIST = re.compile(r"\[([^\[\]]*)\]")


def parse_tool_list(text: str) -> list[str] | None:
    """Names from the last bracketed list in ``text``; None when there is no list."""
    found = _LIST.findall(text or "")
    if not found:
        return None
    items = [s.strip().strip("\"'`").strip() for s in found[-1].split(",")]
    return [s for s in items if s]


def format_tool_list(names: list[str]) -> str:
    return "[" + ", ".join(names) + "]"


# --- planning critic -----------------------------------------------------------------------


@dataclass(frozen=True)
class Critique:
    adjustment: bool
    tools: tuple[str, ...] | None = None
    suggestions: str = ""
    parsed: bool = True

    def __post_init__(self) -> None:
        if self.tools is not None and not self.adjustment:
            raise ValueError("a tool list is only allowed with adjustment=True")

    def to_json(self) -> dict:
        return {
            "adjustment": self.adjustment,
            "tools": list(self.tools) if self.tools is not None else None,
            "suggestions": self.suggestions,
            "parsed": self.parsed,
        }


_ADJ = re.compile(r"ADJUSTMENT\s*:\s*\**\s*(true|false)\b\**", re.I)
_TOOLS = re.compile(r"^[ \t]*tools[ \t]*:[ \t]*\[([^\[\]\n]*)\][ \t]*$", re.I | re.M)


def parse_critique(text: str) -> Critique:
    """Parse a planning-critic reply; an unreadable verdict means no adjustment."""
    if not isinstance(text, str):
        return Critique(False, None, UNPARSEABLE, parsed=False)
    m = _ADJ.search(text)
    if m is None:
        return Critique(False, None, UNPARSEABLE, parsed=False)
    adjustment = m.group(1).lower() == "true"
    rest = text[: m.start()] + text[m.end() :]
    tools = None
    tm = _TOOLS.search(rest)
    if tm is not None:
        rest = rest[: tm.start()] + rest[tm.end() :]
        if adjustment:
            tools = tuple(s.strip().strip("\"'`").strip() for s in tm.group(1).split(",") if s.strip().strip("\"'`").strip())
    suggestions = "\n".join(line.rstrip() for line in rest.strip().splitlines()).strip()
    return Critique(adjustment, tools, suggestions)


def format_critique(c: Critique) -> str:
    lines = [f"ADJUSTMENT: {c.adjustment}"]
    if c.tools is not None:
        lines.append(f"tools: {format_tool_list(list(c.tools))}")
    if c.suggestions:
        lines.append(c.suggestions)
    return "\n".join(lines)


# --- visual critic -------------------------------------------------------------------------

_VERDICT = re.compile(r"\b(true|false|yes|no)\b", re.I)


def parse_verdict(text: str) -> bool | None:
    """First true/false (or yes/no) word in the reply; None when absent."""
    m = _VERDICT.search(text or "")
    if m is None:
        return None
    return m.group(1).lower() in ("true", "yes")


@dataclass(frozen=True)
class CriticVerdict:
    passed: bool
    reason: str
    parsed: bool = True

    def to_json(self) -> dict:
        return {"pass": self.passed, "reason": self.reason, "parsed": self.parsed}

