"""Collects the one-line acceptance verdicts and prints them after the run."""

ACCEPTANCE_LINES: list[str] = []


def record_criterion(number: int, title: str, ok: bool | None, detail: str) -> None:
    verdict = "SKIP" if ok is None else ("PASS" if ok else "FAIL")
    line = f"[{verdict}] criterion {number}: {title} -- {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
