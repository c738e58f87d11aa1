import numpy as np
import pytest
from hypothesis import settings

from regflow import _backend

settings.register_profile("regflow", max_examples=60, deadline=None)
settings.load_profile("regflow")

BACKENDS = sorted(_backend.available().items())


@pytest.fixture(params=[name for name, _ in BACKENDS])
def kernels(request):
    return _backend.available()[request.param]


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
