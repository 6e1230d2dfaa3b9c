# (criterion id, passed, detail) lines reported at the end of the run
ACCEPTANCE = []


def record(criterion: str, passed: bool, detail: str = "") -> None:
    ACCEPTANCE.append((criterion, passed, detail))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for crit, ok, detail in ACCEPTANCE:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {crit}  {detail}")
