import numpy as np
import pytest

from lrcs.model import GroundTruth, generate_ground_truth, measure


@pytest.fixture
def small_truth():
    return generate_ground_truth(6, 3, 2, kappa_target=2.0, seed=11)


@pytest.fixture
def small_instance(small_truth):
    return measure(small_truth, 8, sigma_v=0.1, seed=5)


def random_orthonormal(rng, n, r):
    q, _ = np.linalg.qr(rng.standard_normal((n, r)))
    return q


def rank_one_truth(n, q, sigma=1.0, col=0):
    """r = 1 truth whose only nonzero column is ``col``."""
    u = np.zeros((n, 1))
    u[0, 0] = 1.0
    v = np.zeros((q, 1))
    v[col, 0] = 1.0
    return GroundTruth(u, np.array([sigma]), v)


ACCEPTANCE_LINES = []


def record_criterion(number, name, passed, detail=""):
    ACCEPTANCE_LINES.append(f"[{'PASS' if passed else 'FAIL'}] criterion {number:>2}: {name}"
                            + (f" -- {detail}" if detail else ""))


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
