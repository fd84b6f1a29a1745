import collections

import pytest

# criterion -> list of (check, ok, detail), filled by the acceptance tests
ACCEPTANCE = collections.OrderedDict()


@pytest.fixture
def record():
    def _record(criterion: int, check: str, ok: bool, detail: str = ""):
        ACCEPTANCE.setdefault(criterion, []).append((check, bool(ok), detail))
        return bool(ok)

    return _record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for crit in sorted(ACCEPTANCE):
        checks = ACCEPTANCE[crit]
        ok = all(c[1] for c in checks)
        failed = [c for c in checks if not c[1]]
        shown = failed if failed else checks
        detail = "; ".join(f"{c[0]}: {c[2]}" if c[2] else c[0] for c in shown)
        tr.write_line(f"{'PASS' if ok else 'FAIL'} criterion {crit:2d} ({len(checks) - len(failed)}/{len(checks)} checks) {detail}")
