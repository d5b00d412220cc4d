import re

_acceptance_results = []

_LINE = re.compile(r"test_a(\d+)_(\w+)")


def pytest_runtest_logreport(report):
    if report.when != "call" or "test_acceptance.py" not in report.nodeid:
        return
    m = _LINE.search(report.nodeid)
    if m is None:
        return
    label = m.group(2).replace("_", " ")
    _acceptance_results.append((int(m.group(1)), label, report.outcome))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _acceptance_results:
        return
    terminalreporter.section("acceptance")
    for num, label, outcome in sorted(_acceptance_results):
        status = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"A{num:02d} {label}: {status}")
