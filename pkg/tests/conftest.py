import math
import sys
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

from nanofluxonium.circuit import SingleModeParams
from nanofluxonium.loss import LossModel

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile("default", max_examples=25, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

DEVICES = {
    "device1": SingleModeParams(0.89, 1.37, 10.95),
    "device2": SingleModeParams(0.56, 0.52, 16.16),
    "device3": SingleModeParams(1.9, 0.53, 5.9),
}
DEVICE2_FLUX = -0.46 * math.pi
FITTED_LOSS = LossModel(39000, 15100)


@pytest.fixture(scope="session")
def devices():
    return DEVICES


@pytest.fixture(scope="session")
def device2_system():
    """Eight retained device-2 levels at the Raman working point."""
    from nanofluxonium.dynamics import LevelSystem
    from nanofluxonium.spectra import solve

    s = solve(DEVICES["device2"], DEVICE2_FLUX, k=12)
    return LevelSystem.from_spectrum(s, required=("g0", "e0", "f0", "h0", "g-1", "e-1"))


@pytest.fixture(scope="session")
def raman_collapse(device2_system):
    from nanofluxonium.dynamics import CollapseOp, collapse_from_loss

    s = device2_system
    return collapse_from_loss(s, FITTED_LOSS) + [CollapseOp(s.index("g-1"), s.index("g0"), 1 / 20e-6)]


# Acceptance reporting: one line per criterion in the terminal summary.
_ACCEPTANCE = []


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    if rep.when == "call" or (rep.when == "setup" and rep.outcome != "passed"):
        _ACCEPTANCE.append((mark.args[0], mark.args[1], rep.outcome, rep.duration))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, outcome, duration in sorted(_ACCEPTANCE):
        status = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"[{status}] criterion {number:2d}: {title} ({duration:.1f} s)")
