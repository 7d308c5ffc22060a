import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    for number, status, description in sorted(RESULTS):
        terminalreporter.write_line(
            f"[ACCEPTANCE {number}] {status} - {description}")
