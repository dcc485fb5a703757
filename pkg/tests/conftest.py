import numpy as np
import pytest

from stormpred.lstm import init_params
from stormpred.storm_data import build_dataset
from stormpred.synthetic import make_tracks


@pytest.fixture(scope="session")
def clean_tracks():
    return make_tracks(8, 14, seed=3)


@pytest.fixture(scope="session")
def small_dataset(clean_tracks):
    return build_dataset(clean_tracks, seed=0, min_start=4, pred_len=1)


@pytest.fixture()
def tiny_params():
    return init_params(0, n_x=2, n_h1=3, n_h2=2, n_y=2)


@pytest.fixture()
def rng():
    return np.random.default_rng(0)
