from __future__ import annotations

import numpy as np
import pytest

from hybridwind.econ import FarmSpec, StorageSpec
from hybridwind.series import SeriesFrame, synth_dataset

# specs of the hand-traced dispatch examples
HAND_FARM = FarmSpec(capacity_mw=100.0, capex=1000.0, opex=50.0, fcr=0.1)
HAND_STORAGE = StorageSpec("hand", rating_mw=20.0, duration_h=2.0, rte=0.8)

ACCEPTANCE_LINES: list[str] = []


def hourly(n: int, start: str = "2020-01-01T00:00:00") -> np.ndarray:
    return np.datetime64(start, "s") + np.arange(n) * np.timedelta64(1, "h")


def frame_of(**channels) -> SeriesFrame:
    n = len(next(iter(channels.values())))
    return SeriesFrame(hourly(n), **channels)


@pytest.fixture(scope="session")
def synth_1y() -> SeriesFrame:
    return synth_dataset(1, 3, FarmSpec())


@pytest.fixture(scope="session")
def synth_2y() -> SeriesFrame:
    return synth_dataset(2, 7, FarmSpec())


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
