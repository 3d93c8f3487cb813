"""Command-line entry point: synth, ground-eval, tool, solve, bench.

Settings come from an INI config file (``--config``), then flags, then
``STRUCTIMG_<SECTION>_<KEY>`` environment variables (e.g. ``STRUCTIMG_AGENT_ENDPOINT``).
API tokens are read from the environment variables the config names.
Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import configparser
import json
import logging
import os
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping, Sequence

from .bench import BenchItem, load_items, refine_solver, run_benchmark, summarize
from .chartgen import export_corpus
from .core import Manifest, RasterImage, load_png, read_annotations, save_png
from .grounding import GroundingBackend, OracleGrounder, PerturbedGrounder, RemoteGrounder, evaluate_grounding
from .registry import ToolSettings, default_registry
from .remote import ChatClient
from .workflow import Backends, RemoteChatBackend, ScriptedBackend, WorkflowConfig, parse_action, refine_loop
from .workflow.grammar import ImageRef, ParseFailure, ToolCall

log = logging.getLogger("structimg")

DEFAULT_TOKEN_ENV = "STRUCTIMG_API_TOKEN"


class UsageError(Exception):
    pass


@dataclass(frozen=True)
class Config:
    """Effective settings after merging the config file with flags."""

    agent_endpoint: str | None = None
    agent_model: str = "default"
    agent_token_env: str = DEFAULT_TOKEN_ENV
    grounding_mode: str = "oracle"
    grounding_endpoint: str | None = None
    grounding_model: str = "default"
    grounding_token_env: str = DEFAULT_TOKEN_ENV
    tau: float = 30.0
    scale: float = 2.0
    max_steps: int = 10
    max_rounds: int = 3
    seed: int = 0
    timeout: float = 60.0

    def __post_init__(self) -> None:
        if self.max_steps < 1 or self.max_rounds < 1:
            raise UsageError("max_steps and max_rounds must be at least 1")
        if not (self.tau >= 0 and self.scale > 0 and self.timeout > 0):
            raise UsageError("tau must be >= 0; scale and timeout must be positive")

    def validate(self, need_annotations: bool = False, annotations: Any = None) -> None:
        if self.grounding_mode not in ("oracle", "remote"):
            raise UsageError(f"grounding mode must be oracle or remote, not {self.grounding_mode!r}")
        if self.grounding_mode == "remote" and not self.grounding_endpoint:
            raise UsageError("remote grounding needs an endpoint (--grounding-endpoint or [grounding] endpoint)")
        if self.grounding_mode == "oracle" and need_annotations and not annotations:
            raise UsageError("oracle grounding needs an annotations path")


_CONFIG_KEYS = {
    ("agent", "endpoint"): ("agent_endpoint", str),
    ("agent", "model"): ("agent_model", str),
    ("agent", "token_env"): ("agent_token_env", str),
    ("agent", "timeout"): ("timeout", float),
    ("grounding", "mode"): ("grounding_mode", str),
    ("grounding", "endpoint"): ("grounding_endpoint", str),
    ("grounding", "model"): ("grounding_model", str),
    ("grounding", "token_env"): ("grounding_token_env", str),
    ("tools", "tau"): ("tau", float),
    ("tools", "scale"): ("scale", float),
    ("workflow", "max_steps"): ("max_steps", int),
    ("workflow", "max_rounds"): ("max_rounds", int),
    ("synth", "seed"): ("seed", int),
}

_FLAG_KEYS = {
    "agent_endpoint": "agent_endpoint",
    "agent_model": "agent_model",
    "grounding_endpoint": "grounding_endpoint",
    "grounding_model": "grounding_model",
    "mode": "grounding_mode",
    "tau": "tau",
    "scale": "scale",
    "max_steps": "max_steps",
    "max_rounds": "max_rounds",
}


def load_config(path: str | None, args: argparse.Namespace, environ: Mapping[str, str] | None = None) -> Config:
    environ = os.environ if environ is None else environ
    values: dict[str, Any] = {}
    if path:
        cp = configparser.ConfigParser()
        if not cp.read(path, encoding="utf-8"):
            raise UsageError(f"cannot read config file {path}")
        for (section, key), (field, typ) in _CONFIG_KEYS.items():
            if cp.has_option(section, key):
                try:
                    values[field] = typ(cp.get(section, key))
                except ValueError as e:
                    raise UsageError(f"{path}: [{section}] {key}: {e}") from None
    for flag, field in _FLAG_KEYS.items():
        v = getattr(args, flag, None)
        if v is not None:
            values[field] = v
    for (section, key), (field, typ) in _CONFIG_KEYS.items():
        name = f"STRUCTIMG_{section}_{key}".upper()
        if environ.get(name):
            try:
                values[field] = typ(environ[name])
            except ValueError as e:
                raise UsageError(f"{name}: {e}") from None
    return Config(**values)


def _write_json(path: str | Path, obj: Any) -> None:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False) + "\n", encoding="utf-8")


def find_annotations(image_path: str | Path) -> Path | None:
    """Sibling ``.jsonl`` file, or the corpus layout ``images/x.png`` -> ``annotations/x.jsonl``."""
    p = Path(image_path)
    for cand in (p.with_suffix(".jsonl"), p.parent.parent / "annotations" / f"{p.stem}.jsonl"):
        if cand.is_file():
            return cand
    return None


def make_grounding(cfg: Config, image: RasterImage | None = None, annotations: str | Path | None = None) -> GroundingBackend:
    if cfg.grounding_mode == "remote":
        return RemoteGrounder(ChatClient(cfg.grounding_endpoint, cfg.grounding_model, cfg.grounding_token_env, timeout=cfg.timeout))
    g = OracleGrounder()
    if image is not None and annotations is not None:
        g.add(image, read_annotations(annotations))
    return g


def make_backends(cfg: Config, script: str | None) -> Backends:
    if script:
        return Backends.single(ScriptedBackend.from_file(script))
    if not cfg.agent_endpoint:
        raise UsageError("agents need --script or an endpoint (--agent-endpoint or [agent] endpoint)")
    client = ChatClient(cfg.agent_endpoint, cfg.agent_model, cfg.agent_token_env, timeout=cfg.timeout)
    return Backends.single(RemoteChatBackend(client))


# --- subcommands ---------------------------------------------------------------------------


def cmd_synth(args, cfg: Config) -> int:
    seed = args.seed if args.seed is not None else cfg.seed
    path = export_corpus(args.n, seed, args.out, workers=args.workers)
    manifest = Manifest.load(path)
    print(json.dumps({"manifest": str(path), "entries": len(manifest), "seed": seed}, sort_keys=True))
    return 0


def cmd_ground_eval(args, cfg: Config) -> int:
    cfg.validate()
    manifest_path = Path(args.manifest)
    if manifest_path.is_dir():
        manifest_path = manifest_path / "manifest.json"
    manifest = Manifest.load(manifest_path)
    if cfg.grounding_mode == "oracle":
        backend: GroundingBackend = OracleGrounder.from_manifest(manifest)
    else:
        backend = make_grounding(cfg)
    if args.perturb:
        backend = PerturbedGrounder(backend, args.perturb)
    report = evaluate_grounding(backend, manifest, sample_limit=args.limit, max_in_flight=args.max_in_flight)
    text = report.dumps()
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text, encoding="utf-8")
    print(text, end="")
    return 0


def _parse_tool_args(pairs: Sequence[str]) -> ToolCall:
    """``key=value`` flags; values are read with the planner's argument grammar, else kept verbatim."""
    args = []
    for pair in pairs:
        key, sep, value = pair.partition("=")
        if not sep or not key.strip().isidentifier():
            raise UsageError(f"bad --arg {pair!r}; expected KEY=VALUE")
        try:
            parsed = parse_action(f"ACTION 1: tool({key.strip()}={value.strip()})").action.args
        except ParseFailure:
            parsed = ()
        args.append(parsed[0] if len(parsed) == 1 else (key.strip(), value))
    return ToolCall("tool", tuple(args))


def cmd_tool(args, cfg: Config) -> int:
    registry = default_registry(settings=ToolSettings(cfg.tau, cfg.scale))
    spec = registry.lookup(args.name)
    if spec is None:
        raise UsageError(f"unknown tool {args.name!r}; choose from {', '.join(t.function for t in registry)}")
    call = _parse_tool_args(args.arg or [])
    kwargs: dict[str, Any] = {k: v for k, v in call.args if not isinstance(v, ImageRef)}
    image = None
    ann = None
    if any(p.name == "image" for p in spec.params):
        if not args.image:
            raise UsageError(f"{spec.function} needs --image")
        image = load_png(args.image)
        kwargs["image"] = image
        ann = args.annotations or find_annotations(args.image)
        cfg.validate(need_annotations=True, annotations=ann)
    grounding = make_grounding(cfg, image, ann)
    result = spec.run(spec.bind(kwargs), grounding)
    if isinstance(result, str):
        record = {"tool": spec.function, "arguments": {k: v for k, v in kwargs.items() if k != "image"}, "result": result}
        if args.provenance:
            _write_json(args.provenance, record)
        print(json.dumps(record, sort_keys=True))
        return 0
    out = args.out or str(Path(args.image).with_name(f"{Path(args.image).stem}.{spec.function}.png"))
    save_png(result.image, out)
    record = {"output": out, "description": result.description, "provenance": result.provenance, "data": result.data}
    prov = args.provenance or str(Path(out).with_suffix(".json"))
    _write_json(prov, record)
    print(json.dumps(record, sort_keys=True))
    return 0


def cmd_solve(args, cfg: Config) -> int:
    image = load_png(args.image)
    ann = args.annotations or find_annotations(args.image)
    cfg.validate(need_annotations=True, annotations=ann)
    grounding = make_grounding(cfg, image, ann)
    backends = make_backends(cfg, args.script)
    registry = default_registry(args.tools, ToolSettings(cfg.tau, cfg.scale))
    result = refine_loop(args.question, image, backends, registry, grounding, WorkflowConfig(cfg.max_steps, cfg.max_rounds, verbose=args.verbose))
    text = result.dumps(verbose=args.verbose)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text, encoding="utf-8")
    print(json.dumps({"final_answer": result.final_answer, "rounds_used": result.rounds_used}, sort_keys=True))
    return 0


def cmd_bench(args, cfg: Config) -> int:
    cfg.validate()
    items = load_items(args.items)
    registry = default_registry(args.tools, ToolSettings(cfg.tau, cfg.scale))
    script_dir = Path(args.script_dir) if args.script_dir else None

    def backends_for(item: BenchItem) -> Backends:
        return make_backends(cfg, str(script_dir / f"{item.id}.json") if script_dir else None)

    def grounding_for(item: BenchItem, image: RasterImage) -> GroundingBackend:
        return make_grounding(cfg, image, find_annotations(item.image))

    if script_dir is None:
        make_backends(cfg, None)  # fail fast on a missing endpoint
    judge_backend = None
    if args.judge == "remote":
        judge_backend = make_backends(cfg, None).reasoner
    solver = refine_solver(backends_for, grounding_for, registry, WorkflowConfig(cfg.max_steps, cfg.max_rounds))
    report = run_benchmark(items, solver, args.judge, judge_backend, max_rounds=cfg.max_rounds, max_workers=args.workers)
    text, js = summarize(report)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(js, encoding="utf-8")
    print(text, end="")
    if args.floor is not None and report.accuracy < args.floor:
        print(f"accuracy {report.accuracy:.3f} is below the floor {args.floor:.3f}", file=sys.stderr)
        return 1
    return 0


# --- parser --------------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="structimg", description="Structured-image reasoning: corpus synthesis, grounding, visual tools and agent workflow.")
    p.add_argument("--config", help="INI config file with [agent], [grounding], [tools], [workflow], [synth] sections")
    p.add_argument("-v", "--verbose-log", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", metavar="COMMAND", required=True)

    s = sub.add_parser("synth", help="write a seeded chart corpus with annotations")
    s.add_argument("--n", type=int, required=True, help="number of single-panel charts")
    s.add_argument("--seed", type=int, help="corpus seed (default from config, else 0)")
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--workers", type=int, default=1)
    s.set_defaults(func=cmd_synth)

    g = sub.add_parser("ground-eval", help="score a grounding backend on a corpus")
    g.add_argument("--manifest", required=True, help="manifest.json or the corpus directory")
    g.add_argument("--mode", choices=("oracle", "remote"))
    g.add_argument("--grounding-endpoint")
    g.add_argument("--grounding-model")
    g.add_argument("--perturb", type=float, default=0.0, help="shift every result by this many px along x and y")
    g.add_argument("--limit", type=int, help="only the first N samples")
    g.add_argument("--max-in-flight", type=int, default=1)
    g.add_argument("--out", help="write the JSON report here")
    g.set_defaults(func=cmd_ground_eval)

    t = sub.add_parser("tool", help="run one tool on an image")
    t.add_argument("name", help="tool function or registry name, e.g. crop_subfigure")
    t.add_argument("--image", help="input PNG")
    t.add_argument("--annotations", help="JSONL annotations for oracle grounding (default: found next to the image)")
    t.add_argument("--arg", action="append", metavar="KEY=VALUE", help='tool argument, repeatable, e.g. --arg target_desc="the subplot"')
    t.add_argument("--mode", choices=("oracle", "remote"))
    t.add_argument("--grounding-endpoint")
    t.add_argument("--grounding-model")
    t.add_argument("--tau", type=float)
    t.add_argument("--scale", type=float)
    t.add_argument("--out", help="output PNG")
    t.add_argument("--provenance", help="provenance JSON (default: next to the output)")
    t.set_defaults(func=cmd_tool)

    for name, helptext in (("solve", "answer one question with the refinement loop"), ("bench", "run a benchmark item file")):
        c = sub.add_parser(name, help=helptext)
        if name == "solve":
            c.add_argument("--image", required=True)
            c.add_argument("--question", required=True)
            c.add_argument("--annotations")
            c.add_argument("--script", help="scripted backend JSON (role -> replies)")
            c.add_argument("--verbose", action="store_true", help="include prompts in the trace")
            c.set_defaults(func=cmd_solve)
        else:
            c.add_argument("--items", required=True, help="JSONL of {id, image, question, answer}")
            c.add_argument("--script-dir", help="directory of scripted backends named <id>.json")
            c.add_argument("--judge", choices=("offline", "remote"), default="offline")
            c.add_argument("--floor", type=float, help="exit 1 when accuracy is below this")
            c.add_argument("--workers", type=int, default=1)
            c.set_defaults(func=cmd_bench)
        c.add_argument("--tools", choices=("chart", "geometry", "all"), default="all", help="tool family offered to the dispatcher")
        c.add_argument("--mode", choices=("oracle", "remote"))
        c.add_argument("--agent-endpoint")
        c.add_argument("--agent-model")
        c.add_argument("--grounding-endpoint")
        c.add_argument("--grounding-model")
        c.add_argument("--max-steps", type=int)
        c.add_argument("--max-rounds", type=int)
        c.add_argument("--tau", type=float)
        c.add_argument("--scale", type=float)
        c.add_argument("--out", help="write the JSON trace/report here")
    return p


def run(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose_log else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, args)
        return args.func(args, cfg)
    except UsageError as e:
        parser.print_usage(sys.stderr)
        print(f"{parser.prog}: error: {e}", file=sys.stderr)
        return 2
    except Exception as e:
        print(f"{parser.prog}: {type(e).__name__}: {e}", file=sys.stderr)
        log.debug("failure", exc_info=True)
        return 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
