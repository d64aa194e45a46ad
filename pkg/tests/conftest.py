import numpy as np
import pytest
from hypothesis import settings

from conekit import ConeGeometry, CrossSectionSpec, Cutoff, RadialGrid, WarpProfile

settings.register_profile("conekit", deadline=None, max_examples=40, derandomize=True)
settings.load_profile("conekit")


@pytest.fixture
def circle8():
    return CrossSectionSpec.circle(8)


@pytest.fixture
def geom(circle8):
    """Straight circle cone, moderate grid."""
    return ConeGeometry(circle8, RadialGrid(128, 1e-4), WarpProfile.straight(), -0.5, Cutoff())


@pytest.fixture
def warped(circle8):
    return ConeGeometry(circle8, RadialGrid(128, 1e-4), WarpProfile((0.5,)), -0.5, Cutoff())


def mode_index(spec, label):
    return [m.label for m in spec.modes()].index(label)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# ------------------------------------------------------------------ acceptance summary

ACCEPTANCE = pytest.StashKey[dict]()
N_CRITERIA = 11


@pytest.fixture
def acceptance(request):
    """``report(k, ok, detail)`` records criterion ``k`` and returns ``ok``."""
    store = request.config.stash.setdefault(ACCEPTANCE, {})

    def report(k: int, ok: bool, detail: str) -> bool:
        store[k] = (bool(ok), detail)
        print(f"criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}")
        return bool(ok)

    return report


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    store = config.stash.get(ACCEPTANCE, None)
    if not store:
        return
    terminalreporter.section("acceptance criteria")
    for k in range(1, N_CRITERIA + 1):
        ok, detail = store.get(k, (False, "not run or errored before reporting"))
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
