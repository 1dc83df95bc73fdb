import pytest

# Collected (criterion number, description, passed, detail) tuples; the
# terminal summary prints one line per criterion after the test run.
_RESULTS = []


@pytest.fixture
def acceptance():
    """Recorder for acceptance-criterion outcomes.

    Usage: acceptance(3, "trace stability across bin counts", ok, detail).
    The assertion itself stays in the test; this only drives the summary.
    """

    def record(num: int, desc: str, passed: bool, detail: str = ""):
        _RESULTS.append((num, desc, bool(passed), detail))
        return bool(passed)

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for num, desc, passed, detail in sorted(_RESULTS):
        tag = "PASS" if passed else "FAIL"
        line = f"[criterion {num}] {tag}: {desc}"
        if detail:
            line += f" ({detail})"
        terminalreporter.write_line(line)
