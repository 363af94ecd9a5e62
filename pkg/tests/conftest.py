import logging

# filled by tests/test_acceptance.py: (criterion number, passed, detail)
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n, ok, detail in sorted(ACCEPTANCE):
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}")


def pytest_configure(config):
    # solver convergence warnings are expected in the long runs
    logging.getLogger("patientvec.svm").setLevel(logging.ERROR)
