import os

import pytest
from hypothesis import settings

settings.register_profile("default", max_examples=100, deadline=None)
settings.register_profile("ci", max_examples=300, deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

_ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def acceptance_log(request):
    """Append ``(criterion, passed, detail)`` lines for the end-of-run summary; ``passed=None`` is N/A."""
    return request.config.stash.setdefault(_ACCEPTANCE, [])


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in sorted(lines, key=lambda x: x[0]):
        status = "N/A " if ok is None else ("PASS" if ok else "FAIL")
        terminalreporter.write_line(f"{status}  {name}: {detail}")
