import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("lab", deadline=None, max_examples=40, derandomize=True)
settings.load_profile("lab")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one verdict line per acceptance criterion, printed in the terminal summary
_VERDICTS = {}


@pytest.fixture
def verdict(request):
    """``verdict(number, title, ok, detail)`` records the outcome of an acceptance check."""
    seen = []

    def record(number, title, ok, detail=""):
        seen.append(number)
        _VERDICTS[number] = (title, bool(ok), detail)

    yield record
    if not seen:
        _VERDICTS[request.node.name] = (request.node.name, False, "errored before reaching a verdict")


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for key in sorted(_VERDICTS, key=str):
        title, ok, detail = _VERDICTS[key]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {key}. {title}: {detail}")
