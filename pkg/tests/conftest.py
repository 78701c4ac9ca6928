import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from zonewave.coeffs import make_custom, make_example

settings.register_profile(
    "zonewave",
    deadline=None,
    max_examples=40,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture],
)
settings.load_profile("zonewave")


@pytest.fixture(scope="session")
def ex31():
    return make_example("ex31")


@pytest.fixture(scope="session")
def ex35():
    return make_example("ex35")


@pytest.fixture(scope="session")
def constant_model():
    """Constant damping ``mu = 0.3``; the propagator is a matrix exponential."""
    return make_custom("0.3 + 0*t", "0*t", "0.3 + t", "1 + t")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def acceptance(request):
    """Record one PASS/FAIL line per acceptance criterion."""
    lines = request.config.stash.setdefault(_ACCEPTANCE, [])

    def record(label: str, passed: bool, detail: str, elapsed: float, budget: float) -> None:
        ok = passed and elapsed <= budget
        line = f"{label:5s} {'PASS' if ok else 'FAIL'}  {detail}  [{elapsed:.1f} s / {budget:.0f} s]"
        lines.append(line)
        print(line)

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[0][2:])):
            terminalreporter.write_line(line)
