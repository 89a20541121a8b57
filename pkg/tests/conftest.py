import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from quadwatch.roi import default_config  # noqa: E402
from quadwatch.synth import render, stop_and_hold_scenario  # noqa: E402


@pytest.fixture(scope="session")
def stop_and_hold():
    """Rendered canonical stop-and-hold scene at 1280x720: (spec, frames, truth, config)."""
    spec = stop_and_hold_scenario(0)
    frames, truth = render(spec)
    return spec, frames, truth, default_config(spec.frame_width, spec.frame_height)


@pytest.fixture(scope="session")
def small_config():
    return default_config(640, 360)


def pytest_terminal_summary(terminalreporter):
    from acceptance_log import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
