from __future__ import annotations

import sys

from hypothesis import settings

settings.register_profile("adasgo", deadline=None, max_examples=60)
settings.load_profile("adasgo")


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "CRITERIA_LINES", None)
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(lines):
        terminalreporter.write_line(lines[number])
