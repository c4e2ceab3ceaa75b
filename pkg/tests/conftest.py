import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# acceptance results: criterion number -> list of (cell, ok, detail)
ACCEPTANCE = {}


@pytest.fixture
def acceptance():
    def record(criterion: int, cell: str, ok: bool, detail: str = ""):
        ACCEPTANCE.setdefault(criterion, []).append((cell, bool(ok), detail))
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        cells = ACCEPTANCE[n]
        bad = [c for c in cells if not c[1]]
        status = "PASS" if not bad else "FAIL"
        shown = bad if bad else cells
        detail = "; ".join(f"{c}: {d}" if d else c for c, _, d in shown)
        tr.write_line(f"criterion {n}: {status} ({len(cells) - len(bad)}/{len(cells)} cells) {detail}")
