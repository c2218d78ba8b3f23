import numpy as np
import pytest

from depthresp.extract import default_roi
from depthresp.scene import DepthVideo, TorsoScene, animate
from depthresp.signals import SynthesisParams, condition, synthesize


@pytest.fixture(scope="session")
def scene():
    return TorsoScene()


@pytest.fixture(scope="session")
def driver():
    """Zero-jitter 0.25 Hz, 30 s driver at 30 Hz."""
    return condition(synthesize(SynthesisParams()), 30.0)


@pytest.fixture(scope="session")
def clean_video(scene, driver):
    return animate(scene, driver, 30.0)


@pytest.fixture(scope="session")
def roi(scene):
    return default_roi(scene)


def flat_video(depth=2.0, n=4, h=48, w=64):
    return DepthVideo(np.full((n, h, w), depth, dtype=np.float32), 30.0, 3.0)


def step_frame(h=64, w=64, near=2.0, far=3.0, col=32):
    z = np.full((h, w), far, dtype=np.float32)
    z[:, :col] = near
    return z


# one line per acceptance criterion, shown at the end of the run
ACCEPTANCE_LINES: list[str] = []


def report(criterion: int, ok: bool, detail: str) -> None:
    line = f"criterion {criterion}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
