import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gappy_fuse.model import (
    Burst,
    CalibrationLink,
    DatasetFormatError,
    FusionDataset,
    ModalityData,
    dataset_to_dict,
    datasets_equal,
    load_dataset,
    roundtrip,
    save_dataset,
    validate_dataset,
)

from conftest import make_dataset


def test_valid_dataset_has_no_violations(small_dataset):
    assert validate_dataset(small_dataset) == []


def test_burst_of_one_sample_is_reported(rng):
    ds = make_dataset(rng)
    mod = ds.modalities[0]
    bad = ModalityData(mod.modality_id, 2, mod.bursts[:-1] + (Burst(np.zeros((1, 2))),), 0.1)
    ds = FusionDataset(2, (bad, ds.modalities[1]), ds.calibration)
    problems = validate_dataset(ds)
    assert len(problems) == 1
    assert "burst M<2" in problems[0]


def test_dangling_calibration_index(rng):
    ds = make_dataset(rng, n_bursts=(8, 5), links=((0, 7, 1, 2),))
    problems = validate_dataset(ds)
    assert len(problems) == 1
    assert "dangling calibration index" in problems[0]


def test_dimension_mismatch_and_sigma(rng):
    ds = make_dataset(rng, dims=(1, 3))
    bad_sigma = ModalityData(2, 3, ds.modalities[1].bursts, -1.0)
    ds = FusionDataset(2, (ds.modalities[0], bad_sigma), ds.calibration)
    problems = validate_dataset(ds)
    assert any("ambient_dim 1 < intrinsic_dim 2" in p for p in problems)
    assert any("sigma" in p for p in problems)


def test_self_link_reported(rng):
    ds = make_dataset(rng, links=((0, 1, 1, 1),))
    assert any("itself" in p for p in validate_dataset(ds))


def test_roundtrip_identity(small_dataset):
    assert datasets_equal(roundtrip(small_dataset), small_dataset)


def test_roundtrip_empty():
    ds = FusionDataset(2, (), ())
    back = roundtrip(ds)
    assert datasets_equal(back, ds)
    assert back.modalities == ()


def test_roundtrip_heterogeneous(rng):
    ds = make_dataset(rng, dims=(2, 3, 2), n_bursts=(3, 4, 2), links=((0, 1, 1, 2), (1, 0, 2, 3)))
    assert validate_dataset(ds) == []
    assert datasets_equal(roundtrip(ds), ds)


def test_file_roundtrip(tmp_path, small_dataset):
    path = tmp_path / "ds.json"
    save_dataset(small_dataset, path)
    doc = json.loads(path.read_text())
    assert set(doc) == {"intrinsic_dim", "modalities", "calibration"}
    assert set(doc["modalities"][0]) == {"modality_id", "ambient_dim", "sigma", "bursts"}
    assert datasets_equal(load_dataset(path), small_dataset)


def test_malformed_file_reports_location(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{"intrinsic_dim": 2,\n "modalities": [}')
    with pytest.raises(DatasetFormatError, match="line 2"):
        load_dataset(path)


def test_missing_field_reports_path(tmp_path, small_dataset):
    doc = dataset_to_dict(small_dataset)
    del doc["modalities"][1]["sigma"]
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(doc))
    with pytest.raises(DatasetFormatError, match=r"modalities\[1\]\.sigma"):
        load_dataset(path)


def test_types_are_immutable(small_dataset):
    with pytest.raises(Exception):
        small_dataset.intrinsic_dim = 3
    with pytest.raises(ValueError):
        small_dataset.modalities[0].bursts[0].samples[0, 0] = 1.0


finite = st.floats(allow_nan=False, allow_infinity=False, width=64)


@st.composite
def datasets(draw):
    d = draw(st.integers(1, 3))
    n_mod = draw(st.integers(0, 3))
    mods = []
    for k in range(n_mod):
        dim = draw(st.integers(d, d + 2))
        n_b = draw(st.integers(1, 3))
        bursts = []
        for i in range(n_b):
            m = draw(st.integers(2, 4))
            vals = draw(st.lists(finite, min_size=m * dim, max_size=m * dim))
            bursts.append(Burst(np.array(vals).reshape(m, dim), i))
        sigma = draw(st.floats(1e-6, 10.0))
        mods.append(ModalityData(k + 1, dim, tuple(bursts), sigma))
    links = []
    if n_mod >= 2:
        for _ in range(draw(st.integers(0, 3))):
            k, s = draw(st.sampled_from([(a + 1, b + 1) for a in range(n_mod) for b in range(n_mod) if a != b]))
            i = draw(st.integers(0, mods[k - 1].n_bursts - 1))
            j = draw(st.integers(0, mods[s - 1].n_bursts - 1))
            links.append(CalibrationLink(i, j, k, s))
    return FusionDataset(d, tuple(mods), tuple(links))


@settings(max_examples=60, deadline=None)
@given(datasets())
def test_roundtrip_property(ds):
    assert validate_dataset(ds) == []
    assert datasets_equal(roundtrip(ds), ds)
