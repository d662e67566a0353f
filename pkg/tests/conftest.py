import numpy as np
import pytest

from locpriv.markov import validate_prior


def solve_stationary(P):
    """Stationary vector by a direct linear solve (independent of power iteration)."""
    M = P.shape[0]
    A = np.vstack([P.T - np.eye(M), np.ones(M)])
    b = np.zeros(M + 1)
    b[-1] = 1.0
    return np.linalg.lstsq(A, b, rcond=None)[0]


def random_prior(gen, M, stationary=True, concentration=1.0):
    P = gen.dirichlet(np.full(M, concentration), size=M)
    pi = solve_stationary(P) if stationary else gen.dirichlet(np.ones(M))
    pi = np.clip(pi, 0, None)
    return validate_prior(pi / pi.sum(), P)


@pytest.fixture
def gen():
    return np.random.default_rng(20240601)


_VERDICTS = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_VERDICTS] = []


@pytest.fixture
def verdict(request):
    """Record a criterion outcome and fail the test if it did not hold."""
    lines = request.config.stash[_VERDICTS]

    def record(criterion: int, ok: bool, detail: str) -> None:
        lines.append(f"criterion {criterion:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
        assert ok, detail

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_VERDICTS, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
