import sys


def pytest_terminal_summary(terminalreporter):
    # repeat the acceptance lines after the run, whichever way the module was imported
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
