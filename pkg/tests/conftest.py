"""Collects acceptance-test outcomes and prints one line per criterion."""

import re

TITLES = {
    1: "recovery time",
    2: "blinding click probability",
    3: "photon conversion",
    4: "blinding plan power",
    5: "power sweep shape",
    6: "forcing probabilities",
    7: "coincidence countermeasure",
    8: "recursion vs exact chain",
    9: "Monte Carlo consistency",
    10: "degenerate invariants",
}

_NODE = re.compile(r"test_acceptance\.py::test_c(\d+)_([A-Za-z0-9_]+)(\[[^\]]*\])?")
_results = {}


def pytest_runtest_logreport(report):
    m = _NODE.search(report.nodeid)
    if not m:
        return
    if report.when == "call" or (report.when == "setup" and not report.passed):
        name = m.group(2) + (m.group(3) or "")
        detail = dict(report.user_properties).get("detail", "")
        _results.setdefault(int(m.group(1)), []).append((name, report.passed, detail))


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_results):
        parts = _results[k]
        ok = all(p for _, p, _ in parts)
        notes = "; ".join(f"{n}: {'ok' if p else 'FAILED'}{' ' + d if d else ''}" for n, p, d in parts)
        terminalreporter.write_line(f"ACCEPTANCE C{k} {TITLES.get(k, '')}: {'PASS' if ok else 'FAIL'} ({notes})")
