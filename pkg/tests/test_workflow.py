from __future__ import annotations

import json
from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from structimg.core import RasterImage
from structimg.registry import default_registry
from structimg.workflow import (
    Backends,
    Critique,
    ImageMemory,
    ImageRef,
    ParseFailure,
    ParsedStep,
    ScriptedBackend,
    ScriptExhausted,
    Terminate,
    ToolCall,
    UnknownImageId,
    WorkflowConfig,
    dispatch,
    format_action,
    format_critique,
    parse_action,
    parse_critique,
    parse_tool_list,
    planning_critic_review,
    refine_loop,
    run_episode,
    visual_critic_check,
)
from structimg.workflow.engine import load_template
from structimg.workflow.memory import MemoryCorrupt

DATA = Path(__file__).parent / "data"
REGISTRY = default_registry("chart")


def scripted(name: str) -> ScriptedBackend:
    return ScriptedBackend.from_file(DATA / f"{name}.json")


def blank() -> RasterImage:
    return RasterImage.blank(16, 12)


# --- grammar ------------------------------------------------------------------------------

FORMAT_EXAMPLES = (
    "THOUGHT 1: [Analysis]\nACTION 1: tool_name(key=value)",
    "ADJUSTMENT: False",
    "ADJUSTMENT: True\ntools: [tool1, tool2, tool3]",
)

fragments = st.sampled_from(
    ["THOUGHT", "ACTION", "OBSERVATION", "FINAL ANSWER", "TERMINATE", " 1", " 2", ":", "\n", "(", ")", "=", ",",
     '"', "'", "\\", "img_0", "img_12", "crop_subfigure", "x", "42", "-3.5e2", " ", "ADJUSTMENT", "True", "False",
     "tools", "[", "]", "\t", "é", "∞"]
)
noise = st.one_of(st.text(max_size=60), st.lists(st.one_of(fragments, st.text(max_size=4)), max_size=30).map("".join))


class TestParseAction:
    def test_tool_call(self):
        p = parse_action('THOUGHT 1: need subplot\nACTION 1: crop_subfigure(image=img_0, target_desc="subplot at row 1, column 1")')
        assert p.thought == "need subplot" and p.step == 1
        assert p.action == ToolCall("crop_subfigure", (("image", ImageRef("img_0")), ("target_desc", "subplot at row 1, column 1")))

    def test_terminate(self):
        p = parse_action("FINAL ANSWER: 42\nACTION 3: TERMINATE")
        assert p.action == Terminate("42") and p.step == 3

    def test_missing_action(self):
        with pytest.raises(ParseFailure) as e:
            parse_action("let me think…")
        assert e.value.text == "let me think…"

    def test_last_pair_wins_and_values(self):
        text = 'THOUGHT 1: a\nACTION 1: f(x=1)\nOBSERVATION 1: ok\nTHOUGHT 2: b\nACTION 2: g(n=-2, v=2.5, s=\'it\\\'s\', i=img_4, w=two words)'
        p = parse_action(text)
        assert p.thought == "b"
        assert p.action.kwargs == {"n": -2, "v": 2.5, "s": "it's", "i": ImageRef("img_4"), "w": "two words"}

    @pytest.mark.parametrize("bad", ["ACTION 1: f(", "ACTION 1: f(x)", "ACTION 1: f(x=1, x=2)", "ACTION 1: f(x=\"open)", "ACTION 1: not a call", "ACTION 1: f(x=)"])
    def test_malformed(self, bad):
        with pytest.raises(ParseFailure):
            parse_action(bad)

    @pytest.mark.parametrize("text", FORMAT_EXAMPLES[:1] + ("THOUGHT 3: done\nFINAL ANSWER: 42\nACTION 3: TERMINATE",))
    def test_format_round_trip(self, text):
        assert format_action(parse_action(text)) == text

    @settings(max_examples=500)
    @given(noise)
    def test_total(self, text):
        try:
            p = parse_action(text)
        except ParseFailure:
            return
        assert isinstance(p, ParsedStep)
        assert isinstance(p.action, (ToolCall, Terminate))

    values = st.one_of(
        st.integers(-10**6, 10**6),
        st.floats(-1e6, 1e6, allow_nan=False).filter(lambda v: not v.is_integer()),
        st.integers(0, 99).map(lambda i: ImageRef(f"img_{i}")),
        st.text(max_size=20),
    )

    @given(
        st.from_regex(r"[A-Za-z_][A-Za-z0-9_]{0,10}", fullmatch=True),
        st.lists(st.tuples(st.from_regex(r"[a-z_][a-z0-9_]{0,6}", fullmatch=True), values), max_size=5, unique_by=lambda kv: kv[0]),
        st.text(alphabet=st.characters(blacklist_categories=("Cc", "Cs", "Zl", "Zp")), max_size=30).map(str.strip),
        st.integers(1, 99),
    )
    def test_call_round_trip(self, name, args, thought, n):
        if name.upper() == "TERMINATE":
            return
        step = ParsedStep(thought, ToolCall(name, tuple(args)), n)
        back = parse_action(format_action(step))
        assert back.action == step.action and back.step == n
        if thought and not any(k in thought.upper() for k in ("THOUGHT", "ACTION", "OBSERVATION", "FINAL")):
            assert back.thought == thought


class TestCritique:
    @pytest.mark.parametrize("text", FORMAT_EXAMPLES[1:])
    def test_format_round_trip(self, text):
        assert format_critique(parse_critique(text)) == text

    def test_fields(self):
        c = parse_critique("ADJUSTMENT: True\ntools: [Region_Magnification]\nzoom in on the peak")
        assert c == Critique(True, ("Region_Magnification",), "zoom in on the peak")
        assert parse_critique("ADJUSTMENT: True\nuse a finer crop").tools is None
        assert parse_critique("ADJUSTMENT: False\ntools: [X]").tools is None

    def test_unparseable(self):
        c = parse_critique("looks fine to me")
        assert (c.adjustment, c.suggestions, c.parsed) == (False, "critic-unparseable", False)

    def test_tools_need_adjustment(self):
        with pytest.raises(ValueError):
            Critique(False, ("A",))

    @settings(max_examples=500)
    @given(noise)
    def test_total(self, text):
        c = parse_critique(text)
        assert c.tools is None or c.adjustment

    def test_tool_list(self):
        assert parse_tool_list("[Subfigure_Cropping]") == ["Subfigure_Cropping"]
        assert parse_tool_list("I pick [] here") == []
        assert parse_tool_list("no list") is None


# --- memory -------------------------------------------------------------------------------


class TestMemory:
    def test_examples(self):
        m = ImageMemory()
        img = blank()
        assert m.put(img, "root") == "img_0"
        assert m.get("img_0").image is img
        m.put(blank(), "a", "img_0")
        m.put(blank(), "b", "img_0")
        assert m.children("img_0") == ["img_1", "img_2"] and m.max_branching() == 2
        with pytest.raises(UnknownImageId):
            m.get("img_99")
        m.check_tree()

    def test_rules(self):
        m = ImageMemory()
        with pytest.raises(UnknownImageId):
            m.put(blank(), "x", "img_0")
        m.put(blank(), "root")
        with pytest.raises(ValueError):
            m.put(blank(), "second root")
        with pytest.raises(ValueError):
            m.put(blank(), "", "img_0")

    @given(st.lists(st.integers(0, 10**6), max_size=30))
    def test_always_a_tree(self, picks):
        m = ImageMemory()
        m.put(blank(), "root")
        for p in picks:
            m.put(blank(), "child", f"img_{p % len(m)}")
        m.check_tree()
        assert len(m.edges()) == len(m) - 1

    def test_corruption_detected(self):
        m = ImageMemory()
        m.put(blank(), "root")
        m.put(blank(), "a", "img_0")
        object.__setattr__(m._entries["img_0"], "parent_id", "img_1")
        with pytest.raises(MemoryCorrupt):
            m.check_tree()


# --- dispatch and critics -----------------------------------------------------------------


class TestDispatch:
    def test_single_tool(self):
        d = dispatch("q", blank(), REGISTRY, ScriptedBackend({"dispatcher": ["[Subfigure_Cropping]"]}))
        assert d.tools == ("Subfigure_Cropping",) and not d.fallback

    def test_empty(self):
        d = dispatch("q", blank(), REGISTRY, ScriptedBackend({"dispatcher": ["[]"]}))
        assert d.tools == () and not d.fallback

    def test_fallback(self):
        d = dispatch("What is the value in the subplot at row 2, column 1 for the red series?", blank(), REGISTRY, ScriptedBackend({"dispatcher": ["I would crop it."]}))
        assert d.fallback and d.tools == ("Subfigure_Cropping", "Masking_Data_with_Legend")

    def test_function_names_normalized(self):
        d = dispatch("q", blank(), REGISTRY, ScriptedBackend({"dispatcher": ["[magnify_region, Bogus, Region_Magnification]"]}))
        assert d.tools == ("Region_Magnification",)

    def test_prompt_slots_filled(self):
        b = ScriptedBackend({"dispatcher": ["[]"]})
        dispatch("how tall?", blank(), REGISTRY, b)
        prompt = b.prompts("dispatcher")[0]
        assert "how tall?" in prompt and "Subfigure_Cropping" in prompt and "{" not in prompt.replace("{}", "")


class TestVisualCritic:
    @pytest.mark.parametrize("reply,passed,parsed", [("true", True, True), ("false", False, True), ("hmm, unclear", True, False)])
    def test_verdicts(self, reply, passed, parsed):
        v = visual_critic_check(ScriptedBackend({"visual_critic": [reply]}), blank(), "goal", "goal_satisfaction")
        assert (v.passed, v.parsed) == (passed, parsed)
        if not parsed:
            assert v.reason == "critic-unparseable"


# --- episodes -----------------------------------------------------------------------------


def backends(script: dict) -> tuple[ScriptedBackend, Backends]:
    b = ScriptedBackend.from_json(script)
    return b, Backends.single(b)


class TestEpisode:
    def test_crop_reason_terminate(self, composite, composite_oracle):
        image, _ = composite
        b, bk = backends({
            "planner": [
                'THOUGHT 1: crop\nACTION 1: crop_subfigure(image=img_0, target_desc="subplot at row 1, column 1")',
                'THOUGHT 2: ask\nACTION 2: ask_reasoner(image=img_1, query="peak?")',
                "THOUGHT 3: done\nFINAL ANSWER: 42\nACTION 3: TERMINATE",
            ],
            "reasoner": ["42"],
            "defaults": {"visual_critic": "true"},
        })
        trace = run_episode("q", image, bk, REGISTRY, composite_oracle)
        assert len(trace.steps) == 3 and trace.final_answer == "42"
        assert len(trace.memory) == 2
        assert trace.steps[1].observation == "reasoner: 42"
        assert trace.steps[-1].terminate
        assert b.remaining() == {"planner": 0, "reasoner": 0}

    def test_branch_recall(self, composite, composite_oracle):
        image, _ = composite
        b = scripted("branch_recall")
        trace = run_episode("q", image, Backends.single(b), REGISTRY, composite_oracle)
        assert trace.memory.children("img_0") == ["img_1", "img_2"]
        assert trace.memory.max_branching() >= 2
        # the planner sees pixels only for the current step's images
        shown = [p["images"] for p in trace.prompts]
        assert shown == [["img_0"], ["img_0", "img_1"], ["img_0", "img_2"], ["img_2"]]
        listing = trace.prompts[-1]["prompt"]
        assert "img_1" in listing and "img_2" in listing

    def test_unknown_tool(self, composite, composite_oracle):
        image, _ = composite
        b = scripted("unknown_tool")
        trace = run_episode("q", image, Backends.single(b), REGISTRY.subset(["Subfigure_Cropping"]), composite_oracle, full_registry=REGISTRY)
        assert "unknown tool 'sharpen_image'" in trace.steps[0].observation
        assert "not available in this round" in trace.steps[1].observation
        assert trace.final_answer == "unknown"

    def test_tool_failure_is_observation(self, composite, composite_oracle):
        image, _ = composite
        _, bk = backends({
            "planner": [
                'ACTION 1: crop_subfigure(image=img_0, target_desc="subplot at row 9, column 9")',
                "ACTION 2: crop_subfigure(image=img_7, target_desc=\"the subplot\")",
                "ACTION 3: crop_subfigure(image=img_0)",
                "FINAL ANSWER: x\nACTION 4: TERMINATE",
            ],
        })
        trace = run_episode("q", image, bk, REGISTRY, composite_oracle)
        obs = [s.observation for s in trace.steps]
        assert "GroundingMiss" in obs[0] and "img_7" in obs[1] and "missing argument" in obs[2]
        assert len(trace.memory) == 1

    def test_gating_soundness(self, composite, composite_oracle):
        image, _ = composite
        b, bk = backends({
            "planner": [
                'ACTION 1: crop_subfigure(image=img_0, target_desc="subplot at row 1, column 1")',
                'ACTION 2: ask_reasoner(image=img_1, query="peak?")',
                "FINAL ANSWER: none\nACTION 3: TERMINATE",
            ],
            "visual_critic": ["false"],
            "reasoner": ["should never be asked"],
        })
        trace = run_episode("q", image, bk, REGISTRY, composite_oracle)
        assert trace.steps[0].observation.startswith("error alert")
        assert trace.memory.get("img_1").rejected
        assert trace.steps[1].observation.startswith("refused")
        assert b.prompts("reasoner") == []
        assert "[rejected by visual critic]" in trace.prompts[-1]["prompt"]

    def test_answerability_gate(self, composite, composite_oracle):
        image, _ = composite
        b, bk = backends({
            "planner": ['ACTION 1: ask_reasoner(image=img_0, query="peak?")', "ACTION 2: TERMINATE"],
            "visual_critic": ["false"],
        })
        trace = run_episode("q", image, bk, REGISTRY, composite_oracle)
        assert trace.steps[0].observation.startswith("error alert") and trace.final_answer is None
        assert b.prompts("reasoner") == []

    def test_reasoner_gets_generic_system_prompt(self, composite, composite_oracle):
        image, _ = composite
        b, bk = backends({
            "planner": ['ACTION 1: ask_reasoner(image=img_0, query="peak?")', "FINAL ANSWER: 1\nACTION 2: TERMINATE"],
            "reasoner": ["1"],
            "defaults": {"visual_critic": "yes"},
        })
        run_episode("q", image, bk, REGISTRY, composite_oracle)
        call = next(c for c in b.calls if c["role"] == "reasoner")
        assert call["system"] == load_template("reasoner_system").strip() and call["user"] == "peak?"
        assert call["images"] == [image.digest]

    def test_format_retries(self, composite_oracle, composite):
        image, _ = composite
        b, bk = backends({"planner": ["hmm", "still thinking", "FINAL ANSWER: 3\nACTION 1: TERMINATE"]})
        trace = run_episode("q", image, bk, REGISTRY, composite_oracle)
        assert trace.final_answer == "3" and trace.steps[0].format_retries == 2
        assert "FORMAT" in b.prompts("planner")[1].upper() or len(b.prompts("planner")[1]) > len(b.prompts("planner")[0])

    def test_format_exhaustion_and_step_budget(self, composite, composite_oracle):
        image, _ = composite
        _, bk = backends({"defaults": {"planner": "no action here"}})
        trace = run_episode("q", image, bk, REGISTRY, composite_oracle, WorkflowConfig(max_steps=2))
        assert len(trace.steps) == 2 and trace.final_answer is None
        assert all(s.action is None and "format error" in s.observation for s in trace.steps)

    def test_exhausted_script_raises(self, composite, composite_oracle):
        image, _ = composite
        with pytest.raises(ScriptExhausted):
            run_episode("q", image, Backends.single(ScriptedBackend({})), REGISTRY, composite_oracle)

    def test_code_execution_result(self):
        _, bk = backends({"planner": ['ACTION 1: eval_expression(expr="sqrt(3^2+4^2)")', "FINAL ANSWER: 5\nACTION 2: TERMINATE"]})
        trace = run_episode("q", blank(), bk, default_registry("geometry"), composite_oracle_free())
        assert trace.steps[0].observation == "result: 5"


def composite_oracle_free():
    from structimg.grounding import NullGrounder

    return NullGrounder()


# --- refinement ---------------------------------------------------------------------------


class TestRefine:
    def test_one_round(self, composite, composite_oracle):
        image, _ = composite
        b = scripted("branch_recall")
        res = refine_loop("q", image, Backends.single(b), REGISTRY, composite_oracle)
        assert res.rounds_used == 1 and res.final_answer == "2"

    def test_three_rounds_with_suggestions(self, composite, composite_oracle):
        image, _ = composite
        b = scripted("three_round")
        res = refine_loop("q", image, Backends.single(b), REGISTRY, composite_oracle)
        assert res.rounds_used == 3 and res.final_answer == "42"
        assert [r.tools for r in res.rounds] == [["Subfigure_Cropping"], ["Subfigure_Cropping"], ["Region_Magnification", "Subfigure_Cropping"]]
        round3 = [p["prompt"] for p in res.rounds[2].trace.prompts]
        assert "upper-left panel, not the lower-left" in round3[0]
        assert "magnify before reading" in round3[0]
        assert "upper-left panel, not the lower-left" not in res.rounds[0].trace.prompts[0]["prompt"]
        assert all(v == 0 for v in b.remaining().values())

    def test_stops_at_max_rounds(self, composite, composite_oracle):
        image, _ = composite
        b = ScriptedBackend({}, defaults={"dispatcher": "[]", "planner": "FINAL ANSWER: 1\nACTION 1: TERMINATE", "planning_critic": "ADJUSTMENT: True\ntry harder"})
        res = refine_loop("q", image, Backends.single(b), REGISTRY, composite_oracle)
        assert res.rounds_used == 3
        res = refine_loop("q", image, Backends.single(b), REGISTRY, composite_oracle, WorkflowConfig(max_rounds=5))
        assert res.rounds_used == 5

    def test_critic_tools_revise_registry(self, composite):
        image, _ = composite
        trace = run_episode("q", image, Backends.single(ScriptedBackend({"planner": ["ACTION 1: TERMINATE"]})), REGISTRY, composite_oracle_free())
        c = planning_critic_review(ScriptedBackend({"planning_critic": ["ADJUSTMENT: True\ntools: [Region_Magnification]"]}), trace, REGISTRY)
        assert c.tools == ("Region_Magnification",)
        c = planning_critic_review(ScriptedBackend({"planning_critic": ["ADJUSTMENT: True\nswap the crop"]}), trace, REGISTRY)
        assert c.tools is None and c.suggestions == "swap the crop"

    def test_byte_identical_traces(self, composite, composite_oracle):
        image, anns = composite
        from structimg.grounding import OracleGrounder

        runs = []
        for _ in range(2):
            g = OracleGrounder.from_annotations(image, anns)
            runs.append(refine_loop("q", image, Backends.single(scripted("three_round")), REGISTRY, g).dumps(verbose=True))
        assert runs[0] == runs[1]
        doc = json.loads(runs[0])
        assert doc["rounds_used"] == 3 and len(doc["rounds"]) == 3
