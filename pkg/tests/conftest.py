import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from darn.model import Architecture, StochasticLayerSpec  # noqa: E402


@pytest.fixture
def tiny_arch():
    return Architecture.single(3, 2)


@pytest.fixture
def deep_arch():
    """Two stochastic layers, tanh layers on both interfaces, every kind of autoregression."""
    return Architecture(4, (StochasticLayerSpec(2, det_width=3, encoder_autoregressive=True),
                            StochasticLayerSpec(3, det_width=2, encoder_autoregressive=True)),
                        visible_autoregressive=True)


_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def report():
    """Record one PASS/FAIL/NOT RUN line for an acceptance criterion."""
    def emit(number, title, status, detail):
        line = f"criterion {number:>2} {status:<7} {title}: {detail}"
        _ACCEPTANCE_LINES.append(line)
        print(line)
    return emit


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
