"""Collects one PASS/FAIL line per acceptance criterion."""

import contextlib

TITLES = {
    1: "GAP pipeline reproduction",
    2: "Yield projection reproduction",
    3: "Metric property suite",
    4: "Retrieval exactness",
    5: "Pipeline round-trip",
    6: "Profiler/chunker conservation",
    7: "Evaluation pipeline end-to-end",
}

RESULTS: dict[int, tuple[bool, str]] = {}


@contextlib.contextmanager
def criterion(n: int, detail: list):
    """Record PASS unless the block raises; ``detail`` items are appended to the line."""
    try:
        yield
    except BaseException as exc:
        RESULTS[n] = (False, "; ".join([*map(str, detail), f"{type(exc).__name__}: {exc}"]))
        print(format_line(n))
        raise
    RESULTS[n] = (True, "; ".join(map(str, detail)))
    print(format_line(n))


def format_line(n: int) -> str:
    ok, detail = RESULTS[n]
    return f"criterion {n} [{'PASS' if ok else 'FAIL'}] {TITLES[n]}: {detail}"


def lines() -> list[str]:
    return [format_line(n) for n in sorted(RESULTS)]
