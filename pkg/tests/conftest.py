import math
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from bandopt import ModelParams, make_linear, make_piecewise_poly, make_quadratic, solve_optimal  # noqa: E402
from oracles import QUAD  # noqa: E402

ACCEPTANCE: dict = {}


@pytest.fixture(scope="session")
def model():
    return ModelParams(**QUAD)


@pytest.fixture(scope="session")
def quad_cost():
    return make_quadratic(0.0, 1.0, 0.0, 1.0)


@pytest.fixture(scope="session")
def lin_cost():
    return make_linear(1.0, 1.0)


@pytest.fixture(scope="session")
def drift_case():
    """Asymmetric instance: upward drift, C1 piecewise cost, unequal costs."""
    m = ModelParams(mu=0.3, sigma2=1.5, beta=0.5, K=2.0, k=0.4, L=1.5, l=0.2)
    h = make_piecewise_poly([(-math.inf, 0.0, [0.0, -1.0, 0.5]), (0.0, 2.0, [0.0, 0.5]),
                             (2.0, math.inf, [1.0, -0.5, 0.25])])
    return m, h


@pytest.fixture(scope="session")
def quad_solution(model, quad_cost):
    return solve_optimal(model, quad_cost)


@pytest.fixture(scope="session")
def lin_solution(model, lin_cost):
    return solve_optimal(model, lin_cost)


@pytest.fixture(scope="session")
def drift_solution(drift_case):
    return solve_optimal(*drift_case)


@pytest.fixture
def record():
    """Store an acceptance outcome: record(number, passed, detail)."""
    def _record(number, passed, detail):
        ACCEPTANCE[number] = (bool(passed), detail)
        print(f"criterion {number}: {'PASS' if passed else 'FAIL'} {detail}")
    return _record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
