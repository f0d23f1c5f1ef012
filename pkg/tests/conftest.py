import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from farfield import synthetic
from farfield.geometry import build_array
from farfield.roomsim import RirConfig, SamplerBounds, batch_generate

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", deadline=None, max_examples=15,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

# short RIRs keep the fixture datasets cheap
SHORT_RIRS = RirConfig(max_seconds=0.25)
FAST_BOUNDS = SamplerBounds(t60=(0.2, 0.4))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small_rirs(tmp_path_factory):
    """Four linear-array RIRs from two rooms (speech = source 0, noise = source 1)."""
    out = tmp_path_factory.mktemp("rirs")
    rows = batch_generate(4, build_array("linear_uniform8"), 11, out, FAST_BOUNDS, SHORT_RIRS)
    return out / "rirs.jsonl", rows


@pytest.fixture(scope="session")
def small_corpus(tmp_path_factory):
    out = tmp_path_factory.mktemp("corpus")
    return synthetic.make_corpus(out, 3, 2, seconds=3.0, seed=5)


@pytest.fixture(scope="session")
def small_dataset(tmp_path_factory, small_rirs, small_corpus):
    from farfield.mixer import synthesize_dataset

    manifest, rows = small_rirs
    speech, noise = small_corpus
    specs = synthetic.make_specs(speech, noise, rows, 3, seed=2, clip_seconds=2.0)
    out = tmp_path_factory.mktemp("dataset")
    synthesize_dataset(specs, manifest, out)
    return out / "dataset.jsonl", specs


def pytest_terminal_summary(terminalreporter):
    from desk import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for number in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[number])
