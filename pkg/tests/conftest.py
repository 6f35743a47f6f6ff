import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from hbrownian.geometry import CATALOG_EXAMPLES, make_manifold, make_system

settings.register_profile("default", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(params=CATALOG_EXAMPLES)
def catalog_manifold(request):
    return make_manifold(request.param)


@pytest.fixture
def sphere2():
    return make_system("sphere:2")


@pytest.fixture
def gen():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    lines = []
    for outcome in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(outcome, []):
            if "test_acceptance" in rep.nodeid and rep.when == "call":
                lines.append((rep.nodeid.split("::")[-1], "PASS" if outcome == "passed" else "FAIL"))
    if lines:
        terminalreporter.section("acceptance criteria")
        for name, verdict in sorted(lines):
            terminalreporter.write_line(f"{verdict}  {name}")
