import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from gpcouple.bench.benchmark import build_benchmark_problem

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def small_setup():
    return build_benchmark_problem(20)


@pytest.fixture(scope="session")
def large_setup():
    return build_benchmark_problem(200)


@pytest.fixture(scope="session")
def exact_problem():
    return build_benchmark_problem(surrogate_mode="exact").problem


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE = []


@pytest.fixture
def acceptance_log():
    def log(number, name, ok, detail, seconds):
        line = f"criterion {number:2d} {'PASS' if ok else 'FAIL'} {name}: {detail} [{seconds:.2f} s]"
        _ACCEPTANCE.append((number, line))
        print(line)
    return log


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(_ACCEPTANCE):
            terminalreporter.write_line(line)
