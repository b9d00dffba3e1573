import numpy as np
import pytest

from ness_lab import analyze, build_grid, linearize, make_model, solve_steady

SSEP_A, SSEP_B = 0.2, 0.6


def ssep_kernel(x, y, b=SSEP_B):
    """Green-function remainder of boundary-driven SSEP."""
    return -b**2 * np.minimum(x, y) * (1 - np.maximum(x, y))


def pipeline(name, q_left, q_right, M, **params):
    spec = make_model(name, q_left, q_right, **params)
    prof = solve_steady(spec, build_grid(M))
    system = linearize(spec, prof)
    return spec, prof, system, analyze(system)


@pytest.fixture(scope="session")
def ssep_ness():
    """SSEP a=0.2, b=0.6 on M=32, 64, 128: {M: (spec, profile, system, report)}."""
    return {M: pipeline("ssep", SSEP_A, SSEP_A + SSEP_B, M) for M in (32, 64, 128)}


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(12345)


CATALOG_CASES = [
    ("ssep", 0.2, 0.8, {}),
    ("gaussian", -0.5, 1.5, {"kappa": 2.0}),
    ("power_law", 0.2, 0.8, {"alpha": 1.0}),
    ("power_law", 0.3, 0.7, {"alpha": 2.5}),
    ("two_component", [0.3, 0.6], [0.7, 0.2], {}),
]


# one line per acceptance criterion, filled by test_acceptance.py
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])
