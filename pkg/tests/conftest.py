import numpy as np
import pytest
from hypothesis import settings

from shadowloss.numerics import RandomSource

settings.register_profile("repo", derandomize=True, deadline=None)
settings.load_profile("repo")

_acceptance_lines: list[str] = []


def central_difference(f, x, step=1e-6):
    """Plain one-coordinate-at-a-time central difference, kept test-local."""
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    for i in np.ndindex(x.shape):
        orig = x[i]
        x[i] = orig + step
        hi = f(x)
        x[i] = orig - step
        lo = f(x)
        x[i] = orig
        grad[i] = (hi - lo) / (2 * step)
    return grad


@pytest.fixture
def rng():
    return RandomSource(1234)


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.failed):
        return
    props = dict(report.user_properties)
    if "criterion" not in props:
        return
    status = "PASS" if report.passed else "FAIL"
    _acceptance_lines.append(f"[{status}] criterion {props['criterion']}: {props.get('detail', '')}")


def pytest_terminal_summary(terminalreporter):
    if not _acceptance_lines:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(_acceptance_lines, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
        terminalreporter.write_line(line)
