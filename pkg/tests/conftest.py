import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")

BUILTIN_POTENTIALS = [
    ("gaussian", (), 1),
    ("gaussian", (), 2),
    ("scaled-gaussian", (2.0,), 1),
    ("scaled-gaussian", (0.5,), 3),
    ("gaussian-plus-quartic", (0.1,), 1),
    ("gaussian-plus-quartic", (0.3,), 2),
    ("double-well", (), 1),
]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is None or not getattr(mod, "RESULTS", None):
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[number])
