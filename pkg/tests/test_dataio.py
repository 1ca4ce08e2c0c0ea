import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from aquaforge.core import DataError, Rng, write_aqf, write_png
from aquaforge.dataio import (
    center_crop,
    crop_example,
    index_corpus,
    load_meta_dataset,
    load_pairs,
    minibatches,
    num_batches,
    sample_tasks,
    split_configs,
)
from aquaforge.losses import Example
from scenes import write_corpus


def test_empty_corpus_is_an_error(tmp_path):
    with pytest.raises(DataError, match="no valid"):
        index_corpus(tmp_path)
    with pytest.raises(DataError, match="does not exist"):
        index_corpus(tmp_path / "nope")


def test_orphans_are_warned_not_fatal(tmp_path):
    write_corpus(tmp_path, 3, 8, 8)
    write_png(tmp_path / "lonely.png", np.zeros((8, 8, 3)))
    idx = index_corpus(tmp_path)
    assert len(idx) == 3
    assert [e.id for e in idx.entries] == ["scene000", "scene001", "scene002"]
    assert len(idx.warnings) == 1 and "lonely" in idx.warnings[0]


def test_size_mismatch_is_rejected(tmp_path):
    write_corpus(tmp_path, 2, 8, 8)
    write_aqf(tmp_path / "scene001.depth.aqf", np.ones((8, 9)))
    idx = index_corpus(tmp_path)
    assert [e.id for e in idx.entries] == ["scene000"]
    assert "does not match" in idx.warnings[0]


def test_corpus_hash_changes_with_content(tmp_path):
    write_corpus(tmp_path, 1, 8, 8)
    h1 = index_corpus(tmp_path).entries[0].sha256
    write_aqf(tmp_path / "scene000.depth.aqf", np.full((8, 8), 3.0))
    assert index_corpus(tmp_path).entries[0].sha256 != h1


def test_load_pairs(tmp_path):
    g = np.random.default_rng(0)
    for k in range(3):
        write_png(tmp_path / f"p{k}.png", g.random((8, 8, 3)))
        write_png(tmp_path / f"p{k}.ref.png", g.random((8, 8, 3)))
    write_png(tmp_path / "noref.png", g.random((8, 8, 3)))
    write_png(tmp_path / "bad.png", g.random((8, 8, 3)))
    write_png(tmp_path / "bad.ref.png", g.random((8, 6, 3)))
    pairs = load_pairs(tmp_path)
    assert [e.source for e in pairs.examples] == ["p0", "p1", "p2"]
    assert len(pairs.warnings) == 2
    assert pairs.examples[0].t is None


@given(st.integers(2, 200), st.integers(0, 10**6))
def test_split_is_a_partition(n, seed):
    ids = [f"c{i}" for i in range(n)]
    train, val = split_configs(ids, seed)
    assert set(train) | set(val) == set(ids)
    assert not set(train) & set(val)
    assert 1 <= len(val) <= max(1, round(0.05 * n))
    assert split_configs(ids, seed) == (train, val)


def test_split_single_config_has_no_validation():
    assert split_configs(["a"], 0) == (["a"], [])


@pytest.fixture(scope="module")
def ds(tiny_meta_dir):
    return load_meta_dataset(tiny_meta_dir, seed=0)


def test_meta_dataset_contents(ds):
    assert len(ds.configs) == 6
    assert len(ds.train_ids) == 5 and len(ds.val_ids) == 1
    for cid in ds.configs:
        assert len(ds.samples[cid]) == 8
    ex = ds.samples[ds.train_ids[0]][0]
    assert ex.I.shape == ex.J.shape == ex.t.shape == ex.B.shape == (16, 16, 3)


def test_sample_tasks_contract(ds):
    tasks = sample_tasks(ds, Rng(3), 5, 3, 4, patch_size=8)
    ids = [t.distortion_id for t in tasks]
    assert len(set(ids)) == 5 and not set(ids) & set(ds.val_ids)
    for t in tasks:
        assert len(t.support) == 3 and len(t.query) == 4
        assert not {e.source for e in t.support} & {e.source for e in t.query}
        assert t.support[0].I.shape == (8, 8, 3)
    again = sample_tasks(ds, Rng(3), 5, 3, 4, patch_size=8)
    assert [t.distortion_id for t in again] == ids
    assert np.array_equal(again[0].support[0].I, tasks[0].support[0].I)


def test_sample_tasks_reports_shortfall(ds):
    with pytest.raises(DataError, match="need >= 6"):
        sample_tasks(ds, Rng(0), 6, 1, 1)
    with pytest.raises(DataError, match="10 required"):
        sample_tasks(ds, Rng(0), 2, 5, 5)


def test_crop_keeps_fields_aligned():
    g = np.random.default_rng(0)
    base = g.random((10, 12, 3))
    ex = Example(I=base, J=base + 1, t=base + 2, B=base + 3)
    c = crop_example(ex, 4, g)
    assert c.I.shape == (4, 4, 3)
    assert np.allclose(c.J - c.I, 1) and np.allclose(c.B - c.I, 3)


def test_crop_pads_small_images():
    ex = Example(I=np.random.default_rng(0).random((5, 6, 3)), J=np.zeros((5, 6, 3)))
    assert crop_example(ex, 8, np.random.default_rng(1)).I.shape == (8, 8, 3)
    assert center_crop(ex, 8).J.shape == (8, 8, 3)


def test_minibatches_cover_everything():
    got = list(minibatches(10, 4, np.random.default_rng(0)))
    assert len(got) == num_batches(10, 4) == 3
    assert sorted(i for b in got for i in b) == list(range(10))
