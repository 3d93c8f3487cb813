from __future__ import annotations

import json
import math

import httpx
import pytest
from hypothesis import given
from hypothesis import strategies as st

from structimg.core import BBox, ElementAnnotation, Manifest, Point, RasterImage, read_annotations
from structimg.grounding import (
    BackendUnavailable,
    GroundingRequest,
    GroundingResult,
    MalformedResponse,
    NullGrounder,
    OracleGrounder,
    PerturbedGrounder,
    RemoteGrounder,
    canonical_prompt,
    evaluate_grounding,
    ground,
    panel_grid,
    parse_coordinates,
    parse_element_prompt,
)
from structimg.remote import ChatClient


def reply_transport(text: str, seen: list | None = None, status: int = 200) -> httpx.MockTransport:
    def handler(request: httpx.Request) -> httpx.Response:
        if seen is not None:
            seen.append(request)
        return httpx.Response(status, json={"choices": [{"message": {"content": text}}]})

    return httpx.MockTransport(handler)


def remote(text: str, seen=None, status: int = 200) -> RemoteGrounder:
    return RemoteGrounder(ChatClient("http://model.test/v1/chat", "m", retries=1, backoff=0, transport=reply_transport(text, seen, status)))


class TestPromptGrammar:
    def test_examples(self):
        r = parse_element_prompt("the subplot at row 2, column 1")
        assert (r.category, r.row, r.col) == ("subplot", 2, 1)
        r = parse_element_prompt("tick 25 on the x axis")
        assert (r.category, r.axis, r.value) == ("axis_tick", "x", 25.0)
        r = parse_element_prompt("point B")
        assert (r.category, r.label) == ("geom_point", "B")

    def test_qualified_and_opaque(self):
        r = parse_element_prompt('the legend item "Group A" of the subplot at row 1, column 2')
        assert (r.category, r.label, r.row, r.col) == ("legend_region", "Group A", 1, 2)
        assert parse_element_prompt("something in the corner").opaque

    @given(st.text(max_size=80))
    def test_total(self, text):
        parse_element_prompt(text)

    def test_canonical_prompts_parse_back(self, composite):
        _, anns = composite
        grid = panel_grid(anns)
        for a in anns:
            ref = parse_element_prompt(canonical_prompt(a, grid))
            assert ref.category == a.category


class TestOracle:
    def test_lookup(self, composite, composite_oracle):
        image, anns = composite
        want = next(a for a in anns if a.category == "subplot" and a.grid_pos == (1, 2))
        res = ground(composite_oracle, GroundingRequest(image, "subplot at row 1, column 2", "box"), image=image)
        assert res.outcome == "box" and res.bbox == want.bbox
        miss = ground(composite_oracle, GroundingRequest(image, "subplot at row 9, column 1"), image=image)
        assert miss.outcome == "not_found"

    def test_unknown_image(self, composite_oracle):
        img = RasterImage.blank(5, 5)
        assert not composite_oracle.locate(img, GroundingRequest(img, "the subplot")).found

    def test_exact_on_corpus(self, corpus):
        report = evaluate_grounding(OracleGrounder.from_manifest(Manifest.load(corpus)), corpus)
        assert report.overall == 1.0
        assert set(report.per_category) == {"subplot", "legend_region", "text_label", "axis_tick"}
        assert all(v == 1.0 for v in report.per_category.values())

    def test_null_scores_zero(self, corpus):
        report = evaluate_grounding(NullGrounder(), corpus, sample_limit=3)
        assert report.overall == 0.0 and report.n_samples == 3 and report.n_not_found > 0

    def test_monotone_under_perturbation(self, corpus):
        oracle = OracleGrounder.from_manifest(Manifest.load(corpus))
        reports = [evaluate_grounding(PerturbedGrounder(oracle, d), corpus) for d in (0, 2, 25)]
        for a, b in zip(reports, reports[1:]):
            assert b.overall <= a.overall
            for cat in a.per_category:
                assert b.per_category[cat] <= a.per_category[cat]

    def test_report_arithmetic_and_concurrency(self, corpus):
        oracle = OracleGrounder.from_manifest(Manifest.load(corpus))
        serial = evaluate_grounding(PerturbedGrounder(oracle, 3), corpus)
        fanned = evaluate_grounding(PerturbedGrounder(oracle, 3), corpus, max_in_flight=4)
        assert serial.dumps() == fanned.dumps()
        assert abs(serial.overall - math.fsum(serial.per_category.values()) / len(serial.per_category)) <= 1e-12
        assert json.loads(serial.dumps())["overall"] == serial.overall


class TestClamping:
    @given(st.floats(-500, 500), st.floats(-500, 500), st.floats(0, 500), st.floats(0, 500))
    def test_results_inside_image(self, x, y, w, h):
        res = GroundingResult("box", "t", bbox=BBox(x, y, x + w, y + h)).clamped(40, 30)
        assert BBox(0, 0, 40, 30).contains_box(res.bbox)
        pt = GroundingResult("point", "t", point=Point(x, y)).clamped(40, 30)
        assert 0 <= pt.point.x <= 39 and 0 <= pt.point.y <= 29


class TestRemote:
    def test_parse_coordinates(self):
        assert parse_coordinates("[12, 30, 200, 180]") == ("box", BBox(12, 30, 200, 180))
        assert parse_coordinates("<|box_start|>(1,2),(3,4)<|box_end|>") == ("box", BBox(1, 2, 3, 4))
        assert parse_coordinates("at [5, 6] and [1, 2, 3, 4]") == ("point", Point(5, 6))
        assert parse_coordinates("Not found") == ("not_found", None)
        with pytest.raises(MalformedResponse) as e:
            parse_coordinates("it is near the top")
        assert e.value.raw_text == "it is near the top"

    def test_found_box_and_wire_format(self, monkeypatch):
        monkeypatch.setenv("STRUCTIMG_API_TOKEN", "secret")
        seen: list[httpx.Request] = []
        img = RasterImage.blank(300, 200)
        res = ground(remote("[12, 30, 200, 180]", seen), GroundingRequest(img, "the legend"), image=img)
        assert res.outcome == "box" and res.bbox == BBox(12, 30, 200, 180)
        assert res.raw_text == "[12, 30, 200, 180]"
        body = json.loads(seen[0].content)
        assert seen[0].headers["authorization"] == "Bearer secret"
        parts = body["messages"][-1]["content"]
        assert parts[0]["type"] == "image" and parts[0]["image_url"].startswith("data:image/png;base64,")
        assert parts[-1]["type"] == "text" and "the legend" in parts[-1]["text"]

    def test_clamped_and_not_found(self):
        img = RasterImage.blank(100, 100)
        res = ground(remote("<|box_start|>[-5, 10, 400, 90]<|box_end|>"), GroundingRequest(img, "x"), image=img)
        assert res.bbox == BBox(0, 10, 100, 90)
        assert ground(remote("Not found"), GroundingRequest(img, "x"), image=img).outcome == "not_found"

    def test_transport_failure(self):
        img = RasterImage.blank(10, 10)
        with pytest.raises(BackendUnavailable):
            ground(remote("", status=503), GroundingRequest(img, "x"), image=img)

    def test_malformed_scored_zero(self, corpus):
        report = evaluate_grounding(remote("I cannot tell"), corpus, sample_limit=1)
        assert report.overall == 0.0 and report.n_malformed > 0

    def test_request_validation(self):
        with pytest.raises(ValueError):
            GroundingRequest("x.png", "   ")
