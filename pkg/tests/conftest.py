import numpy as np
import pytest

from attmidflow import autodiff as ad

_ACCEPTANCE_LINES = pytest.StashKey[list]()


@pytest.fixture
def f64():
    with ad.precision(np.float64):
        yield


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def record(request):
    """``record(n, title, ok, detail)`` prints one criterion line and returns ``ok``."""
    lines = request.config.stash.setdefault(_ACCEPTANCE_LINES, [])

    def _record(number: int, title: str, ok: bool, detail: str) -> bool:
        line = f"criterion {number:>2} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
        print(line)
        lines.append(line)
        return bool(ok)

    return _record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_ACCEPTANCE_LINES, [])
    if lines:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
