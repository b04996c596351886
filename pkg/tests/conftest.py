"""Pytest hooks: one visible PASS/FAIL line per acceptance criterion."""


def pytest_runtest_logreport(report):
    if report.when != "call" or "test_acceptance.py" not in report.nodeid:
        return
    name = report.nodeid.split("::")[-1]
    outcome = "PASS" if report.passed else "FAIL"
    print(f"\n[ACCEPTANCE {outcome}] {name}", flush=True)
