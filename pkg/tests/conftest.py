from __future__ import annotations

import numpy as np
import pytest

from branchrep.models import build_burgers
from branchrep.modes import TruncationBox

BURGERS_CB = 1.9161919086024088


def smooth_profile(scale=0.05, decay=5.0):
    return lambda k: scale * np.exp(1j * k[0]) / abs(k[0]) ** decay


@pytest.fixture(scope="session")
def burgers_small():
    """Burgers, d=1, k_max=8, alpha=1.5, smooth data with sup-norm 0.05."""
    box = TruncationBox(1, 8, True)
    return build_burgers(1, 1.5, box, 2.0, BURGERS_CB, u0=smooth_profile())


def pytest_terminal_summary(terminalreporter):
    lines = []
    for outcome in ("passed", "failed"):
        for rep in terminalreporter.stats.get(outcome, []):
            if rep.when != "call" or "test_acceptance" not in rep.nodeid:
                continue
            props = dict(rep.user_properties)
            name = props.get("criterion", rep.nodeid.split("::")[-1])
            detail = props.get("detail", "raised before reporting")
            lines.append((name, f"{outcome == 'passed' and 'PASS' or 'FAIL'}  {name}: {detail}"))
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines, key=lambda x: int(x[0].split()[-1])):
            terminalreporter.write_line(line)
