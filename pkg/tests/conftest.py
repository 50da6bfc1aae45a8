from __future__ import annotations

import pytest
from hypothesis import settings

from afncd.annotations import load_dataset
from afncd.dataset import windows_from_series
from afncd.simulate import simulate_dataset

# sandbox machines stall unpredictably; example counts stay the default
settings.register_profile("suite", deadline=None)
settings.load_profile("suite")


@pytest.fixture(scope="session")
def synth_dir(tmp_path_factory):
    """A small synthetic dataset written in the binary record format."""
    path = tmp_path_factory.mktemp("synth")
    simulate_dataset(path, n_records=8, seed=7)
    return path


@pytest.fixture(scope="session")
def synth_series(synth_dir):
    return load_dataset(synth_dir)


@pytest.fixture(scope="session")
def synth_windows(synth_series):
    windows = []
    for series in synth_series:
        windows.extend(windows_from_series(series, 32, "drr"))
    return windows
