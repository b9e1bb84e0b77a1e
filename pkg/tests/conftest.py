import numpy as np
import pytest

from kbkssd.core import TimeSeries, default_config


def two_plateau(p, q, high=10.0, low=1.0, noise=0.0, rng=None):
    x = np.r_[np.full(p, high), np.full(q, low)]
    if noise:
        x = x + rng.normal(0.0, noise, x.size)
    return x


def warmup_series(rng, n=1500, step=None, level=100.0, noise=1.0):
    """Decaying warm-up, a step down, then a noisy plateau."""
    step = step if step is not None else int(rng.integers(150, 600))
    t = np.arange(n)
    x = level + rng.normal(0.0, noise, n)
    x[:step] += 0.4 * level * (1.0 + 0.3 * np.exp(-t[:step] / 50.0))
    return x, step


@pytest.fixture
def cfg():
    return default_config()


@pytest.fixture
def rng():
    return np.random.default_rng(20240501)


@pytest.fixture
def synthetic_set(rng):
    out = []
    for i in range(50):
        x, _ = warmup_series(rng, n=int(rng.integers(900, 1600)), noise=float(rng.uniform(0.3, 3)))
        out.append(TimeSeries(f"s{i:02d}", x))
    return out


ACCEPTANCE_LINES = []


def report(number, title, ok, detail=""):
    """Record and print one acceptance line, then fail the test if needed."""
    line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {title}" + (f"  [{detail}]" if detail else "")
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
