import numpy as np
import pytest

from panelmd.panel import PanelDataset

_ACCEPTANCE: list[str] = []


def make_panel(rng, n, T, p, noise=1.0, beta=None):
    X = rng.standard_normal((n * T, p))
    beta = rng.standard_normal(p) if beta is None else np.asarray(beta, dtype=float)
    y = X @ beta + noise * rng.standard_normal(n * T)
    return PanelDataset(X=X, y=y, n=n, T=T), beta


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def record():
    """Collect one summary line per acceptance check for the terminal report."""

    def _record(label, ok, detail):
        _ACCEPTANCE.append(f"{'PASS' if ok else 'FAIL'}  {label}: {detail}")

    return _record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE:
            terminalreporter.write_line(line)
