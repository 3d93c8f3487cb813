"""Benchmark runner: answer judging, per-item accuracy and per-round critic TP/FP tallies."""

from __future__ import annotations

import json
import logging
import math
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Literal, Sequence

from .core import RasterImage, load_png
from .grounding import GroundingBackend
from .registry import ToolRegistry
from .workflow.backends import AgentBackend, Backends
from .workflow.engine import RefineResult, WorkflowConfig, refine_loop, render
from .workflow.grammar import parse_verdict

log = logging.getLogger(__name__)

JudgeMode = Literal["offline", "remote"]


class BenchError(ValueError):
    pass


@dataclass(frozen=True)
class BenchItem:
    id: str
    image: str
    question: str
    gold_answer: str

    def __post_init__(self) -> None:
        if not str(self.gold_answer).strip():
            raise BenchError(f"item {self.id}: gold answer is empty")


def load_items(path: str | Path) -> list[BenchItem]:
    """Read ``{id, image, question, answer}`` JSONL; image paths resolve against the file's directory."""
    path = Path(path)
    items = []
    for n, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            d = json.loads(line)
            image = Path(d["image"])
            if not image.is_absolute():
                image = path.parent / image
            items.append(BenchItem(str(d["id"]), str(image), str(d["question"]), str(d["answer"])))
        except (KeyError, json.JSONDecodeError) as e:
            raise BenchError(f"{path}:{n}: bad item record: {e}") from e
    return items


# --- judging -------------------------------------------------------------------------------

# a unit is stripped only when it trails a number
_UNIT = re.compile(r"^([-+]?(?:\d+\.?\d*|\.\d+)(?:e[-+]?\d+)?)\s*(?:%|percent|degrees?|deg|°|units?|cm|mm|m|km|kg|g|s|ms)$")


def normalize_answer(text: str) -> str:
    s = str(text).strip().lower()
    s = s.rstrip(".").strip()
    s = s.replace(",", "").replace("$", "")
    s = _UNIT.sub(r"\1", s).strip()
    return " ".join(s.split())


def _number(s: str) -> float | None:
    try:
        v = float(s)
    except ValueError:
        return None
    return v if math.isfinite(v) else None


def judge_offline(pred: str | None, gold: str) -> bool:
    """Normalized exact match, else exact numeric equality (no tolerance margin)."""
    if pred is None:
        return False
    p, g = normalize_answer(pred), normalize_answer(gold)
    if p == g:
        return True
    pn, gn = _number(p), _number(g)
    return pn is not None and gn is not None and pn == gn


@dataclass(frozen=True)
class Judgement:
    correct: bool
    flagged: bool = False


def judge_answer(
    pred: str | None,
    gold: str,
    mode: JudgeMode = "offline",
    judge_backend: AgentBackend | None = None,
    question: str = "",
) -> Judgement:
    if mode == "offline":
        return Judgement(judge_offline(pred, gold))
    if mode != "remote":
        raise ValueError(f"unknown judge mode {mode!r}")
    if judge_backend is None:
        raise ValueError("remote judging needs a judge backend")
    if pred is None:
        return Judgement(False)
    reply = judge_backend.complete("judge", "", render("judge", question=question, gold=gold, pred=pred), [])
    verdict = parse_verdict(reply)
    if verdict is None:
        return Judgement(False, flagged=True)
    return Judgement(verdict)


# --- runs ----------------------------------------------------------------------------------


@dataclass(frozen=True)
class ItemResult:
    id: str
    predicted: str | None
    correct: bool
    rounds_used: int
    round_answers: tuple[str | None, ...] = ()
    round_correct: tuple[bool, ...] = ()
    adjustments: tuple[bool, ...] = ()
    error: str | None = None
    judge_flagged: bool = False

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "predicted": self.predicted,
            "correct": self.correct,
            "rounds_used": self.rounds_used,
            "round_answers": list(self.round_answers),
            "round_correct": list(self.round_correct),
            "adjustments": list(self.adjustments),
            "error": self.error,
            "judge_flagged": self.judge_flagged,
        }


@dataclass(frozen=True)
class CriticRound:
    round: int
    identified: int
    tp: int
    fp: int

    def to_json(self) -> dict:
        return {"round": self.round, "identified": self.identified, "tp": self.tp, "fp": self.fp}


@dataclass(frozen=True)
class BenchReport:
    accuracy: float
    per_item: tuple[ItemResult, ...]
    critic_rounds: tuple[CriticRound, ...]
    judge_mode: str = "offline"

    def to_json(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "n_items": len(self.per_item),
            "n_correct": sum(r.correct for r in self.per_item),
            "judge_mode": self.judge_mode,
            "per_item": [r.to_json() for r in self.per_item],
            "critic_rounds": [c.to_json() for c in self.critic_rounds],
        }


Solver = Callable[[BenchItem], RefineResult]


def refine_solver(
    backends_for: Callable[[BenchItem], Backends],
    grounding_for: Callable[[BenchItem, RasterImage], GroundingBackend],
    registry: ToolRegistry,
    config: WorkflowConfig = WorkflowConfig(),
) -> Solver:
    """A solver that loads the item image and runs the refinement loop on it."""

    def solve(item: BenchItem) -> RefineResult:
        image = load_png(item.image)
        return refine_loop(item.question, image, backends_for(item), registry, grounding_for(item, image), config)

    return solve


def _run_item(item: BenchItem, solver: Solver, mode: JudgeMode, judge_backend) -> ItemResult:
    try:
        result = solver(item)
    except Exception as e:  # per-item failures are recorded, the run continues
        log.warning("item %s failed: %s", item.id, e)
        return ItemResult(item.id, None, False, 0, error=f"{type(e).__name__}: {e}")
    answers = tuple(r.trace.final_answer for r in result.rounds)
    verdicts = [judge_answer(a, item.gold_answer, mode, judge_backend, item.question) for a in answers]
    last = verdicts[-1]
    return ItemResult(
        item.id,
        result.final_answer,
        last.correct,
        result.rounds_used,
        answers,
        tuple(v.correct for v in verdicts),
        tuple(r.critique.adjustment for r in result.rounds),
        judge_flagged=any(v.flagged for v in verdicts),
    )


def tally_critic(results: Iterable[ItemResult], max_rounds: int) -> tuple[CriticRound, ...]:
    """Round r identifies an item when its critique asked for adjustment; TP if that round's answer was wrong."""
    rows = []
    results = list(results)
    n_rounds = max([max_rounds] + [len(r.adjustments) for r in results])
    for rnd in range(1, n_rounds + 1):
        tp = fp = 0
        for r in results:
            if len(r.adjustments) >= rnd and r.adjustments[rnd - 1]:
                if r.round_correct[rnd - 1]:
                    fp += 1
                else:
                    tp += 1
        rows.append(CriticRound(rnd, tp + fp, tp, fp))
    return tuple(rows)


def run_benchmark(
    items: Sequence[BenchItem],
    solver: Solver,
    judge: JudgeMode = "offline",
    judge_backend: AgentBackend | None = None,
    max_rounds: int = 3,
    max_workers: int = 1,
) -> BenchReport:
    if not items:
        raise BenchError("benchmark needs at least one item")
    ids = [it.id for it in items]
    if len(set(ids)) != len(ids):
        raise BenchError("item ids must be unique")
    with ThreadPoolExecutor(max_workers=max(1, max_workers)) as pool:
        results = list(pool.map(lambda it: _run_item(it, solver, judge, judge_backend), items))
    results.sort(key=lambda r: r.id)
    accuracy = math.fsum(1.0 for r in results if r.correct) / len(results)
    return BenchReport(accuracy, tuple(results), tally_critic(results, max_rounds), judge)


def summarize(report: BenchReport) -> tuple[str, str]:
    """Aligned text tables and bit-stable JSON."""
    n_ok = sum(r.correct for r in report.per_item)
    lines = [f"accuracy: {report.accuracy:.3f} ({n_ok}/{len(report.per_item)})", ""]
    id_w = max([2] + [len(r.id) for r in report.per_item])
    lines.append(f"{'id':<{id_w}}  {'correct':<7}  {'rounds':>6}  predicted")
    for r in report.per_item:
        pred = r.predicted if r.predicted is not None else f"(none{': ' + r.error if r.error else ''})"
        lines.append(f"{r.id:<{id_w}}  {str(r.correct):<7}  {r.rounds_used:>6}  {pred}")
    lines.append("")
    lines.append(f"{'round':>5}  {'identified':>10}  {'tp':>4}  {'fp':>4}")
    for c in report.critic_rounds:
        lines.append(f"{c.round:>5}  {c.identified:>10}  {c.tp:>4}  {c.fp:>4}")
    text = "\n".join(lines) + "\n"
    return text, json.dumps(report.to_json(), indent=2, sort_keys=True, ensure_ascii=False) + "\n"


__all__ = [
    "BenchError",
    "BenchItem",
    "BenchReport",
    "CriticRound",
    "ItemResult",
    "Judgement",
    "judge_answer",
    "judge_offline",
    "load_items",
    "normalize_answer",
    "refine_solver",
    "run_benchmark",
    "summarize",
    "tally_critic",
]
