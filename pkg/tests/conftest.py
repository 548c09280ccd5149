import pytest

# filled by test_acceptance.py, one (criterion, passed, detail) per check
ACCEPTANCE: list[tuple[str, bool, str]] = []


@pytest.fixture
def report():
    def add(name, ok, detail=""):
        ok = bool(ok)
        ACCEPTANCE.append((name, ok, detail))
        print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
        return ok
    return add


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in ACCEPTANCE:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
