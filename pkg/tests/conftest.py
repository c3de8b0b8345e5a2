import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from aencmi.synthetic import planted_signal  # noqa: E402

_ACCEPTANCE = pytest.StashKey[dict]()


@pytest.fixture
def planted():
    # 16 zeros / 24 ones; a 60/40 split keeps the empty-model CV error away
    # from a tie with informative models
    return planted_signal(frac_ones=0.4, seed=0)


@pytest.fixture
def acceptance(request):
    """Record one verdict line per acceptance criterion."""
    log = request.config.stash.setdefault(_ACCEPTANCE, {})

    def record(number, title, verdict, detail):
        line = f"[{verdict}] criterion {number}: {title} -- {detail}"
        log[number] = line
        print(line)
    return record


def pytest_terminal_summary(terminalreporter, config):
    log = config.stash.get(_ACCEPTANCE, {})
    if log:
        terminalreporter.write_sep("=", "acceptance criteria")
        for number in sorted(log):
            terminalreporter.write_line(log[number])
