import os
import sys

import pytest
from hypothesis import settings

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


@pytest.fixture(scope="session")
def small_ds():
    """5x5 synthetic grid over a short record: fast enough for unit tests."""
    from rarf.data import SynthConfig, generate_synthetic
    return generate_synthetic(SynthConfig(grid=(5, 5), n_hours=720, seed=3))


@pytest.fixture(scope="session")
def small_split(small_ds):
    from rarf.data import random_split
    return random_split(small_ds, 3, 3, 0)


@pytest.fixture(scope="session")
def small_data(small_ds, small_split):
    from rarf.data import compute_norm_stats
    from rarf.forecaster import StationData
    return StationData(small_ds, small_split.train_station_ids, compute_norm_stats(small_ds, small_split))
