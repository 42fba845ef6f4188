"""Shared test configuration: the acceptance-criteria reporter."""

_ACCEPTANCE_RESULTS = []


def record_criterion(name: str, passed: bool, detail: str) -> None:
    line = f"{name}: {'PASS' if passed else 'FAIL'} — {detail}"
    _ACCEPTANCE_RESULTS.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if _ACCEPTANCE_RESULTS:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in _ACCEPTANCE_RESULTS:
            terminalreporter.write_line(line)
