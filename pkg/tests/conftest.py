import numpy as np
import pytest

from mclab.model import gen_truth, observe, sample_mask


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_problem():
    """n=30, r=2, p=0.6 instance with retained noise."""
    truth = gen_truth(30, 2, seed=3)
    omega = sample_mask(30, 0.6, seed=4)
    obs = observe(truth, omega, 0.01, seed=5, keep_noise=True, p=0.6)
    return truth, obs


_ACCEPTANCE = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_ACCEPTANCE] = []


@pytest.fixture
def verdict_line(request):
    """Record one ``criterion k: PASS|FAIL`` line for the terminal summary."""
    lines = request.config.stash[_ACCEPTANCE]

    def record(label, ok, detail):
        line = f"{label}: {'PASS' if ok else 'FAIL'} | {detail}"
        lines.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
