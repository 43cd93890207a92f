import sys

import numpy as np
import pytest

from specfp import kernels
from specfp.fixtures import default_specs, generate_noise_clips, generate_surrogate_corpus


@pytest.fixture(params=kernels.available_backends())
def backend(request):
    return kernels.get_backend(request.param)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_corpus(tmp_path_factory):
    """Three short-clip systems plus real; quick enough for protocol tests."""
    out = tmp_path_factory.mktemp("small_corpus")
    return generate_surrogate_corpus(default_specs(clip_seconds=0.25), 30, 30, 11, out)


@pytest.fixture(scope="session")
def noise_clips(tmp_path_factory):
    out = tmp_path_factory.mktemp("noise")
    return generate_noise_clips(8, 1.0, 22050, 3, out)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(results[n])
