import sys

sys.path.insert(0, str(__file__.rsplit("/", 1)[0]))

ACCEPTANCE_RESULTS = {}


def record_criterion(number, name, passed, detail=""):
    ACCEPTANCE_RESULTS[number] = (name, bool(passed), detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for number in sorted(ACCEPTANCE_RESULTS):
        name, passed, detail = ACCEPTANCE_RESULTS[number]
        status = "PASS" if passed else "FAIL"
        suffix = f"  ({detail})" if detail else ""
        terminalreporter.write_line(f"[{status}] criterion {number}: {name}{suffix}")
