from __future__ import annotations

import pytest
from hypothesis import HealthCheck, settings

from structimg.chartgen import compose_multipanel, export_corpus, render_chart, synth_single
from structimg.core import RasterImage
from structimg.grounding import OracleGrounder

settings.register_profile("repo", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("repo")


@pytest.fixture(scope="session")
def corpus(tmp_path_factory):
    """A 10 + 2 sample corpus written once per session."""
    return export_corpus(10, 3, tmp_path_factory.mktemp("corpus"))


@pytest.fixture(scope="session")
def charts():
    return [synth_single(11, i) for i in range(4)]


@pytest.fixture(scope="session")
def composite(charts):
    """2x2 composite and its annotations."""
    return compose_multipanel([(c.image, c.annotations) for c in charts], seed=5)


@pytest.fixture
def composite_oracle(composite):
    image, anns = composite
    return OracleGrounder.from_annotations(image, anns)


@pytest.fixture(scope="session")
def chart():
    return synth_single(11, 0)


@pytest.fixture
def chart_oracle(chart):
    return OracleGrounder.from_annotations(chart.image, chart.annotations)


def snapshot(image: RasterImage) -> bytes:
    return bytes(image.pixels.tobytes())
