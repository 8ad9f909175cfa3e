import numpy as np
import pytest

from gazekit.model import GazeRecording
from gazekit.synth import OculomotorSpec, default_stimulus_spec, generate_stimulus, simulate_gaze


def make_recording(x, y=None, rate_hz=1000.0, valid=None, t0=0.0):
    x = np.asarray(x, dtype=float)
    y = np.zeros_like(x) if y is None else np.asarray(y, dtype=float)
    t = t0 + np.arange(x.size) * 1000.0 / rate_hz
    valid = np.ones(x.size, dtype=bool) if valid is None else np.asarray(valid, dtype=bool)
    return GazeRecording(t, x, y, valid, rate_hz)


@pytest.fixture(scope="session")
def default_track():
    return generate_stimulus(default_stimulus_spec())


@pytest.fixture(scope="session")
def clean_case(default_track):
    """Low-noise synthetic recording of the default design, with truth labels."""
    rec, truth = simulate_gaze(default_track, OculomotorSpec(noise_std=0.02, seed=1))
    return rec, default_track, truth


@pytest.fixture(scope="session")
def noiseless_case(default_track):
    rec, truth = simulate_gaze(default_track, OculomotorSpec(noise_std=0.0))
    return rec, default_track, truth


ACCEPTANCE_LINES: list = []


def verdict(cid: int, title: str, ok: bool, detail: str) -> None:
    """Print and remember one pass/fail line, then fail the test if needed."""
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {cid:2d} {title}: {detail}"
    print(line)
    ACCEPTANCE_LINES.append((cid, line))
    assert ok, line


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
