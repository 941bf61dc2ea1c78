import numpy as np
import pytest

from proxmo.problem import load_problem, shipped_problem

# filled by tests/test_acceptance.py, printed at the end of the session
ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def ex31():
    return shipped_problem("example31")


@pytest.fixture(scope="session")
def quad2d():
    return shipped_problem("quad2d")


def make_problem(components, nvars=1, lower=None, upper=None, ref=None, work=None):
    """Build a problem from ``[[(expr, L), ...], ...]``."""
    doc = {
        "name": "synthetic",
        "nvars": nvars,
        "domain": {
            "lower": lower if lower is not None else ["-inf"] * nvars,
            "upper": upper if upper is not None else ["inf"] * nvars,
        },
        "reference_point": ref if ref is not None else [0.0] * nvars,
        "components": [
            {"name": f"f{j + 1}",
             "pieces": [{"expr": e, "lipschitz_grad": L, "label": f"f{i + 1}{j + 1}"}
                        for i, (e, L) in enumerate(comp)]}
            for j, comp in enumerate(components)
        ],
    }
    if work is not None:
        doc["working_region"] = {"lower": work[0], "upper": work[1]}
    return load_problem(doc)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def ex31_traces(ex31):
    from proxmo.driver import solve

    return {x0: solve(ex31, [x0]) for x0 in (2.5, 0.5, 1.7)}
