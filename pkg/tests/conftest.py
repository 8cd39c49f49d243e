import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))  # make oracles.py importable


def pytest_runtest_logreport(report):
    # one visible pass/fail line per acceptance criterion
    if report.when != "call" or "test_acceptance" not in report.nodeid:
        return
    if report.passed:
        outcome = "PASS"
    elif report.skipped:
        outcome = "SKIP"
    else:
        outcome = "FAIL"
    name = report.nodeid.split("::")[-1]
    print(f"[acceptance {outcome}] {name}", file=sys.stderr, flush=True)
