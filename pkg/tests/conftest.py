import numpy as np
import pytest

from gappy_fuse.model import Burst, CalibrationLink, FusionDataset, ModalityData


def make_dataset(rng, dims=(2, 2), n_bursts=(4, 5), m=6, d=2, links=((0, 1, 1, 2),)):
    mods = []
    for k, (dim, n) in enumerate(zip(dims, n_bursts)):
        bursts = tuple(Burst(rng.normal(size=(m, dim)), i) for i in range(n))
        mods.append(ModalityData(k + 1, dim, bursts, 0.1))
    return FusionDataset(d, tuple(mods), tuple(CalibrationLink(*l) for l in links))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_dataset(rng):
    return make_dataset(rng)
