from __future__ import annotations

import pytest

from atomdetect.analysis.streamio import PhotonStream
from atomdetect.config import ExperimentConfig
from atomdetect.simulator import run_simulation

# criterion number -> (passed, detail); filled by the acceptance tests
ACCEPTANCE: dict = {}

CLOSED_LOOP_DURATION = 300.0
FARADAY_DURATION = 300.0
SPONTANEOUS_DURATION = 300.0


class Run:
    """A simulated acquisition together with its no-atom reference."""

    def __init__(self, cfg: ExperimentConfig, seed: int, duration: float):
        cfg = cfg.replace(**{"run.duration": duration})
        self.config = cfg
        self.duration = duration
        self.s0, self.s1, self.truth = run_simulation(cfg, seed=seed)
        self.merged = PhotonStream.merge(self.s0, self.s1)


def _background(cfg: ExperimentConfig, seed: int, duration: float):
    cfg = cfg.replace(**{"run.duration": duration, "beam.flux": 0.0})
    b0, b1, _ = run_simulation(cfg, seed=seed)
    return b0, b1, PhotonStream.merge(b0, b1)


@pytest.fixture(scope="session")
def closed_loop_run():
    """Faraday defaults at the weak drive used for the correlation fit."""
    run = Run(ExperimentConfig().replace(**{"drive.intensity_Y": 0.24}), 11,
              CLOSED_LOOP_DURATION)
    run.b0, run.b1, run.background = _background(run.config, 12, CLOSED_LOOP_DURATION)
    return run


@pytest.fixture(scope="session")
def faraday_run():
    """Faraday defaults at the calibration drive."""
    return Run(ExperimentConfig().replace(**{"drive.intensity_Y": 0.4}), 21, FARADAY_DURATION)


@pytest.fixture(scope="session")
def spontaneous_run():
    cfg = ExperimentConfig().replace(**{"drive.intensity_Y": 0.4, "emission.mode": "spontaneous"})
    return Run(cfg, 31, SPONTANEOUS_DURATION)


@pytest.fixture(scope="session")
def background_y04():
    """No-atom acquisition with the background of the Y = 0.4 drive."""
    return _background(ExperimentConfig().replace(**{"drive.intensity_Y": 0.4}), 22,
                       FARADAY_DURATION)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
