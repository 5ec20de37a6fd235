import numpy as np
import pytest

from roughmf.grids import TimeGrid
from roughmf.roughpath import STRAT, NoisePath, brownian_lift


@pytest.fixture
def noise_2d():
    return NoisePath.generate(42, TimeGrid.regular(0.0, 1.0, 1 << 12), 2)


@pytest.fixture
def strat_lift(noise_2d):
    return brownian_lift(noise_2d, TimeGrid.regular(0.0, 1.0, 1 << 6), STRAT)


def random_rough_path(seed, cells=64, d=2, alpha=0.4, fine_per=16):
    noise = NoisePath.generate(seed, TimeGrid.regular(0.0, 1.0, cells * fine_per), d)
    return brownian_lift(noise, TimeGrid.regular(0.0, 1.0, cells), STRAT, alpha)


def assert_close(a, b, tol, msg=""):
    err = np.max(np.abs(np.asarray(a) - np.asarray(b)))
    assert err <= tol, f"{msg} max err {err:g} > {tol:g}"


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    import sys

    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None) if mod else None
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(results):
        name, ok, detail = results[num]
        line = f"criterion {num:>3} [{name}]: {'PASS' if ok else 'FAIL'}"
        if detail:
            line += f"  -- {detail}"
        terminalreporter.write_line(line)
