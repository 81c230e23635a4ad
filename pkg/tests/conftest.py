import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("ci", max_examples=50, deadline=None)
settings.load_profile("ci")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE: list[str] = []


def record(criterion: str, passed: bool, detail: str) -> bool:
    line = f"{'PASS' if passed else 'FAIL'}  criterion {criterion}: {detail}"
    ACCEPTANCE.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
