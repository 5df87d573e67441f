import pytest

# (criterion, passed, detail) lines collected by the acceptance suite
ACCEPTANCE = []


@pytest.fixture
def record():
    def _record(number, title, passed, detail):
        line = f"{'PASS' if passed else 'FAIL'} criterion {number} ({title}): {detail}"
        ACCEPTANCE.append((number, line))
        print(line)
        return passed
    return _record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE, key=lambda x: x[0]):
            terminalreporter.write_line(line)
