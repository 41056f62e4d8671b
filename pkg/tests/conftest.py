import numpy as np
import pytest

from avatarforge import synthetic
from avatarforge.cli import sample_dir
from avatarforge.mesh import Mesh


@pytest.fixture
def tetrahedron():
    v = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    f = np.array([[0, 2, 1], [0, 1, 3], [0, 3, 2], [1, 2, 3]])
    return Mesh(v, f)


@pytest.fixture
def unit_square():
    v = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [1.0, 1.0, 0.0], [0.0, 1.0, 0.0]])
    return Mesh(v, np.array([[0, 1, 2], [0, 2, 3]]))


@pytest.fixture(scope="session")
def body_model():
    """Armless 4-joint body with two shape modes."""
    return synthetic.make_body_model(n_betas=2, with_arms=False)


@pytest.fixture(scope="session")
def full_model():
    return synthetic.make_body_model(n_betas=10, with_arms=True)


@pytest.fixture(scope="session")
def head():
    return synthetic.make_head()


@pytest.fixture(scope="session")
def samples():
    return sample_dir()


ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance_report():
    """Record one pass/fail line per acceptance criterion."""

    def record(number, title, passed, detail):
        line = f"[{'PASS' if passed else 'FAIL'}] criterion {number}: {title} ({detail})"
        ACCEPTANCE_LINES.append((number, line))
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
