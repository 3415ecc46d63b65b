from hypothesis import settings

settings.register_profile("default", deadline=None)
settings.load_profile("default")

# (criterion, passed, detail) lines filled in by test_acceptance.py
ACCEPTANCE_LINES: list[tuple[str, bool, str]] = []
ACCEPTANCE_TABLE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for line in ACCEPTANCE_TABLE:
        tr.write_line(line)
    for name, ok, detail in ACCEPTANCE_LINES:
        tr.write_line(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
