import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))


def pytest_terminal_summary(terminalreporter):
    try:
        import test_acceptance
    except ImportError:
        return
    results = getattr(test_acceptance, "RESULTS", {})
    started = getattr(test_acceptance, "STARTED", set())
    if not started:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for number in sorted(started):
        desc = test_acceptance.CRITERIA[number]
        status = results.get(number, "FAIL")
        terminalreporter.write_line(f"[criterion {number:2d}] {desc}: {status}")
