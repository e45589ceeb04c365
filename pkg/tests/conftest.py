import numpy as np
import pytest

from finslerdet import Box, RandersField


def euclid_field(b, n=2, domain=None):
    beta = np.zeros(n)
    beta[: len(b)] = b
    return RandersField.constant(np.eye(n), beta, domain or Box.cube(n, -4.0, 4.0))


def curved_field():
    return RandersField.from_expressions(
        [["1 + 0.3*sin(x1)^2", "0.1*x1*x2"], ["0.1*x1*x2", "exp(0.2*x2)"]],
        ["0.2*cos(x2)", "0.1*x1 + 0.05"], Box.cube(2))


def tilted_field():
    return RandersField.from_expressions(
        [["2 + 0.5*cos(x1*x2)", "0.3"], ["0.3", "1 + x1^2"]],
        ["0.3*sin(x1 + x2)", "0.1*x2^2 - 0.2"], Box.cube(2))


def field_3d():
    return RandersField.from_expressions(
        [["1 + 0.1*x1^2", "0.05*x3", "0"], ["0.05*x3", "1.2", "0.1*sin(x2)"],
         ["0", "0.1*sin(x2)", "exp(0.1*x1)"]],
        ["0.2 + 0.1*x3", "0.1*cos(x1)", "0 - 0.15*x2"], Box.cube(3))


def riemannian_field(n):
    if n == 2:
        return RandersField.from_expressions(
            [["1 + 0.1*x1^2", "0.2*sin(x2)"], ["0.2*sin(x2)", "2 + cos(x1)"]], ["0", "0"], Box.cube(2))
    return RandersField.from_expressions(
        [["1 + 0.1*x1^2", "0", "0.1*x2"], ["0", "1.5", "0"], ["0.1*x2", "0", "exp(0.2*x3)"]],
        ["0", "0", "0"], Box.cube(3))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
