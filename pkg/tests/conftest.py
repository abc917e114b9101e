import numpy as np
import pytest

from metricmatch.dataset import Dataset


def make_dataset(n=60, k=3, seed=0, p=0.4, effect=1.0):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, k))
    d = (rng.random(n) < p).astype(int)
    d[:2] = [0, 1]
    d[2:4] = [0, 1]
    d[4:6] = [0, 1]
    y = X.sum(axis=1) + effect * d + 0.1 * rng.normal(size=n)
    return Dataset(X, d, y, tuple(f"x{j}" for j in range(k)))


@pytest.fixture
def small_ds():
    return make_dataset()


@pytest.fixture
def write_csv(tmp_path):
    def _write(text, name="data.csv"):
        path = tmp_path / name
        path.write_text(text)
        return path
    return _write


def pytest_terminal_summary(terminalreporter):
    import acceptance_log

    if acceptance_log.LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(acceptance_log.LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
