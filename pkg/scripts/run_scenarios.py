"""Replay the scripted workflow scenarios on a synthetic composite chart and print their traces."""

from __future__ import annotations

import argparse
from pathlib import Path

from structimg.chartgen import compose_multipanel, synth_single
from structimg.grounding import OracleGrounder
from structimg.registry import default_registry
from structimg.workflow import Backends, ScriptedBackend, WorkflowConfig, refine_loop

DATA = Path(__file__).resolve().parent.parent / "tests" / "data"


def main(argv: list[str] | None = None) -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("scenarios", nargs="*", type=Path, default=sorted(DATA.glob("*.json")))
    ap.add_argument("--out", type=Path, help="directory for the JSON traces")
    args = ap.parse_args(argv)
    image, anns = compose_multipanel([(c.image, c.annotations) for c in (synth_single(11, i) for i in range(4))], seed=5)
    registry = default_registry("chart")
    for path in args.scenarios:
        backends = Backends.single(ScriptedBackend.from_file(path))
        result = refine_loop("scripted scenario", image, backends, registry, OracleGrounder.from_annotations(image, anns), WorkflowConfig())
        branching = max(r.trace.memory.max_branching() for r in result.rounds)
        print(f"{path.stem}: rounds={result.rounds_used} answer={result.final_answer!r} max_branching={branching}")
        for r in result.rounds:
            for s in r.trace.steps:
                print(f"  r{r.round} s{s.index}: {s.action or '-'} -> {s.observation[:90]}")
        if args.out:
            args.out.mkdir(parents=True, exist_ok=True)
            (args.out / f"{path.stem}.trace.json").write_text(result.dumps(), encoding="utf-8")


if __name__ == "__main__":
    main()
