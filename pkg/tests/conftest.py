"""Acceptance bookkeeping: one PASS/FAIL line per criterion in the terminal summary."""

import pytest

_RESULTS: dict[int, dict] = {}


def criterion(number: int, title: str, part: str | None = None):
    """Tag an acceptance test with its criterion number (and optional sub-part)."""

    def wrap(fn):
        fn._criterion = (number, title, part)
        return fn

    return wrap


@pytest.fixture
def measured(request):
    """Call with a short string describing the measured quantity."""

    def note(text: str) -> None:
        request.node.user_properties.append(("measured", text))

    return note


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    tag = getattr(getattr(item, "function", None), "_criterion", None)
    if tag is None or (rep.when != "call" and rep.passed):
        return
    number, title, part = tag
    entry = _RESULTS.setdefault(number, {"title": title, "parts": {}})
    notes = "; ".join(v for k, v in item.user_properties if k == "measured")
    entry["parts"][part or ""] = (rep.passed, notes)


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for number in sorted(_RESULTS):
        entry = _RESULTS[number]
        ok = all(p for p, _ in entry["parts"].values())
        tr.write_line(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {entry['title']}")
        for part, (passed, notes) in entry["parts"].items():
            label = f"[{part}] " if part else ""
            tr.write_line(f"    {label}{'pass' if passed else 'FAIL'}  {notes}")
