import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from veinforge.evaluation import LabeledSkeleton
from veinforge.preprocess import preprocess_pipeline
from veinforge.synthgen import SynthSpec, gen_dataset

settings.register_profile(
    "default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


@pytest.fixture(scope="session")
def default_samples():
    """Default synthetic dataset: 20 subjects x 5 captures, seed 42."""
    return gen_dataset(SynthSpec())


@pytest.fixture(scope="session")
def default_skeletons(default_samples):
    return [LabeledSkeleton(str(s.label), preprocess_pipeline(s.image)) for s in default_samples]


def pytest_terminal_summary(terminalreporter):
    from tests import test_acceptance  # noqa: PLC0415

    if test_acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in test_acceptance.RESULTS:
            terminalreporter.write_line(line)
