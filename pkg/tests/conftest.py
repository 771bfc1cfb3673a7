import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

_criteria = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py::test_criterion_" not in report.nodeid:
        return
    name = report.nodeid.split("::")[-1]
    if report.when == "call" or report.failed:
        _criteria[name] = (report.passed and _criteria.get(name, (True,))[0], dict(report.user_properties))


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_criteria):
        ok, props = _criteria[name]
        num = int(name.split("_")[2])
        label = " ".join(name.split("_")[3:])
        extra = " ".join(f"{k}={v}" for k, v in props.items())
        terminalreporter.write_line(f"criterion {num:2d} {'PASS' if ok else 'FAIL'}  {label}  {extra}".rstrip())
