"""Collects one PASS/FAIL line per acceptance criterion for the terminal summary."""

LINES: list[str] = []


def record(number: int, ok: bool, text: str) -> str:
    line = f"{'PASS' if ok else 'FAIL'} criterion {number:>2}: {text}"
    LINES.append(line)
    return line
