import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("lama", deadline=None, max_examples=30, derandomize=True)
settings.load_profile("lama")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


_VERDICTS = pytest.StashKey[dict]()


@pytest.fixture
def verdict(request):
    """Record one acceptance line; the terminal summary prints them all in order."""
    lines = request.config.stash.setdefault(_VERDICTS, {})

    def record(label, passed, detail):
        line = f"{'PASS' if passed else 'FAIL'} {label}: {detail}"
        lines[label] = line
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_VERDICTS, {})
    if lines:
        terminalreporter.section("acceptance criteria")
        for label in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(lines[label])
