"""Shared pytest plumbing: the acceptance summary printed at the end of a run."""

ACCEPTANCE_LINES = {}


def record(key, title, passed, detail):
    line = f"[{'PASS' if passed else 'FAIL'}] {key:>3}. {title}: {detail}"
    ACCEPTANCE_LINES[key] = line
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")

    def order(k):
        head = k.rstrip("abcdefghijklmnopqrstuvwxyz")
        return (int(head) if head.isdigit() else 99, k)

    for key in sorted(ACCEPTANCE_LINES, key=order):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])
