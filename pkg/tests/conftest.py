import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from resvoc import synthetic
from resvoc.dsp import Waveform

settings.register_profile(
    "resvoc",
    deadline=None,
    max_examples=60,
    derandomize=True,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture],
)
settings.load_profile("resvoc")

FS = 16000


@pytest.fixture(scope="session")
def male_utterance():
    return synthetic.utterance(synthetic.SPEAKERS["m1"], 3.0, seed=11)


@pytest.fixture(scope="session")
def female_utterance():
    return synthetic.utterance(synthetic.SPEAKERS["f1"], 3.0, seed=12)


@pytest.fixture(scope="session")
def vowel():
    """A single voiced stretch with its generator ground truth."""
    rng = np.random.default_rng(5)
    return synthetic.voiced_segment(synthetic.SPEAKERS["m2"], 8000, FS, rng, vowels=["a", "o"])


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def white_noise(n, seed, scale=0.1):
    return Waveform(scale * np.random.default_rng(seed).standard_normal(n), FS)


def pytest_terminal_summary(terminalreporter):
    import sys
    module = sys.modules.get("test_acceptance")
    if module is None or not module.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in range(1, len(module.CRITERIA) + 1):
        status, detail = module.RESULTS.get(n, ("FAIL", "did not complete"))
        terminalreporter.write_line(f"criterion {n:2d} {module.CRITERIA[n - 1]}: {status}  {detail}")
