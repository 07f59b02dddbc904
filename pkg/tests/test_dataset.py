"""Tests for feature containers, file formats, sampling, and synth data."""

import numpy as np
import pytest

from anchorhash.dataset import (
    Dataset,
    FeatureMatrix,
    Split,
    load_features,
    load_labels,
    load_split,
    sample_anchors,
    save_features,
    save_labels,
    save_split,
    synth_multimodal,
    training_means,
)
from anchorhash.errors import DataFormatError


def small_dataset(rng, n=20, labels=None):
    mods = [
        FeatureMatrix(modality_id=0, data=rng.normal(size=(3, n))),
        FeatureMatrix(modality_id=1, data=rng.normal(size=(5, n))),
    ]
    split = Split(train=np.arange(n - 4), query=np.arange(n - 4, n))
    return Dataset(modalities=mods, split=split, labels=labels)


# ---------------------------------------------------------------------------
# containers


def test_feature_matrix_shape_and_finiteness():
    fm = FeatureMatrix(modality_id=0, data=[[1, 2, 3], [4, 5, 6]])
    assert fm.feature_dim == 2
    assert fm.count == 3
    assert fm.data.dtype == np.float64
    with pytest.raises(DataFormatError, match="2-d"):
        FeatureMatrix(modality_id=0, data=np.zeros(3))
    bad = np.ones((2, 4))
    bad[1, 2] = np.nan
    with pytest.raises(DataFormatError, match="row 1, column 2"):
        FeatureMatrix(modality_id=3, data=bad)


def test_dataset_validation(rng):
    with pytest.raises(DataFormatError, match="at least 2 modalities"):
        Dataset(
            modalities=[FeatureMatrix(0, np.zeros((2, 3)))],
            split=Split(train=[0], query=[1]),
        )
    mods = [FeatureMatrix(0, np.zeros((2, 3))), FeatureMatrix(1, np.zeros((2, 4)))]
    with pytest.raises(DataFormatError, match="disagree on instance count"):
        Dataset(modalities=mods, split=Split(train=[0], query=[1]))
    mods = [FeatureMatrix(0, np.zeros((2, 4))), FeatureMatrix(1, np.zeros((2, 4)))]
    with pytest.raises(DataFormatError, match="out of range"):
        Dataset(modalities=mods, split=Split(train=[0, 4], query=[1]))
    with pytest.raises(DataFormatError, match="duplicate"):
        Dataset(modalities=mods, split=Split(train=[0, 0], query=[1]))
    with pytest.raises(DataFormatError, match="overlap"):
        Dataset(modalities=mods, split=Split(train=[0, 1], query=[1]))
    with pytest.raises(DataFormatError, match="0/1"):
        Dataset(
            modalities=mods,
            split=Split(train=[0, 1], query=[2]),
            labels=np.full((4, 3), 2),
        )
    with pytest.raises(DataFormatError, match="label count"):
        Dataset(
            modalities=mods,
            split=Split(train=[0, 1], query=[2]),
            labels=np.arange(5),
        )


# ---------------------------------------------------------------------------
# feature files


def test_csv_round_trip(tmp_path):
    path = tmp_path / "m0.csv"
    path.write_text("1,2,3\n4,5,6\n")
    fm = load_features(path)
    assert fm.feature_dim == 2
    assert fm.count == 3
    assert np.array_equal(fm.data, [[1, 2, 3], [4, 5, 6]])
    out = tmp_path / "copy.csv"
    save_features(fm, out)
    assert np.array_equal(load_features(out).data, fm.data)


def test_csv_rejects_nan(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("1,NaN\n2,3\n")
    with pytest.raises(DataFormatError, match="row 0, column 1"):
        load_features(path)


def test_csv_rejects_malformed(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("1,2\n3\n")
    with pytest.raises(DataFormatError, match="malformed CSV"):
        load_features(path)


def test_binary_round_trip_bit_exact(tmp_path, rng):
    fm = FeatureMatrix(modality_id=2, data=rng.normal(size=(7, 13)) * 1e6)
    path = tmp_path / "m.bin"
    save_features(fm, path)
    back = load_features(path, modality_id=2)
    assert np.array_equal(back.data, fm.data)
    assert back.data.dtype == np.float64
    # instance columns are stored contiguously
    payload = path.read_bytes()[20:]
    first_column = np.frombuffer(payload[: 7 * 8], dtype="<f8")
    assert np.array_equal(first_column, fm.data[:, 0])


def test_binary_header_validation(tmp_path, rng):
    fm = FeatureMatrix(0, rng.normal(size=(3, 4)))
    path = tmp_path / "m.bin"
    save_features(fm, path)
    raw = path.read_bytes()

    truncated = tmp_path / "trunc.bin"
    truncated.write_bytes(raw[:-8])
    with pytest.raises(DataFormatError, match="header promises"):
        load_features(truncated)

    short = tmp_path / "short.bin"
    short.write_bytes(raw[:10])
    with pytest.raises(DataFormatError, match="truncated header"):
        load_features(short)

    wrong = tmp_path / "wrong.bin"
    wrong.write_bytes(b"NOPE" + raw[4:])
    with pytest.raises(DataFormatError, match="bad magic"):
        load_features(wrong)

    version = tmp_path / "version.bin"
    version.write_bytes(raw[:4] + np.uint32(9).tobytes() + raw[8:])
    with pytest.raises(DataFormatError, match="unsupported version"):
        load_features(version)


def test_format_resolution(tmp_path, rng):
    fm = FeatureMatrix(0, rng.normal(size=(2, 3)))
    path = tmp_path / "data.features"
    save_features(fm, path, fmt="bin")
    assert np.array_equal(load_features(path, fmt="bin").data, fm.data)
    assert np.array_equal(load_features(path).data, fm.data)  # auto -> bin
    with pytest.raises(DataFormatError, match="unknown feature format"):
        load_features(path, fmt="parquet")


# ---------------------------------------------------------------------------
# splits and labels


def test_split_round_trip(tmp_path):
    split = Split(train=[4, 0, 2], query=[1, 3])
    path = tmp_path / "split.txt"
    save_split(split, path)
    back = load_split(path)
    assert np.array_equal(back.train, [4, 0, 2])
    assert np.array_equal(back.query, [1, 3])


def test_split_file_errors(tmp_path):
    path = tmp_path / "split.txt"
    path.write_text("0 1 2\n")
    with pytest.raises(DataFormatError, match="two lines"):
        load_split(path)
    path.write_text("0 1\n2 x\n")
    with pytest.raises(DataFormatError, match="non-integer"):
        load_split(path)


def test_labels_round_trip_single_and_multi(tmp_path):
    path = tmp_path / "labels.txt"
    save_labels(np.array([0, 2, 1]), path)
    assert np.array_equal(load_labels(path), [0, 2, 1])
    multi = np.array([[1, 0, 1], [0, 1, 0]])
    save_labels(multi, path)
    assert np.array_equal(load_labels(path), multi)


def test_labels_file_errors(tmp_path):
    path = tmp_path / "labels.txt"
    path.write_text("")
    with pytest.raises(DataFormatError, match="empty label file"):
        load_labels(path)
    path.write_text("1,0\n1,0,1\n")
    with pytest.raises(DataFormatError, match="inconsistent widths"):
        load_labels(path)
    path.write_text("1\nx\n")
    with pytest.raises(DataFormatError, match="malformed label line"):
        load_labels(path)


# ---------------------------------------------------------------------------
# sampling and statistics


def test_sample_anchors_entire_split(rng):
    ds = small_dataset(rng)
    anchors = sample_anchors(ds, ds.split.train.size, seed=123)
    assert np.array_equal(np.sort(anchors.indices), np.sort(ds.split.train))
    assert anchors.count == ds.split.train.size
    for m, cols in enumerate(anchors.per_modality):
        assert np.array_equal(cols, ds.modalities[m].data[:, anchors.indices])


def test_sample_anchors_deterministic_and_distinct(rng):
    ds = small_dataset(rng)
    a = sample_anchors(ds, 5, seed=7)
    b = sample_anchors(ds, 5, seed=7)
    c = sample_anchors(ds, 5, seed=8)
    assert np.array_equal(a.indices, b.indices)
    assert not np.array_equal(a.indices, c.indices)
    assert np.unique(a.indices).size == 5
    assert np.isin(a.indices, ds.split.train).all()


def test_sample_anchors_too_many(rng):
    ds = small_dataset(rng)
    with pytest.raises(DataFormatError, match="anchor count"):
        sample_anchors(ds, ds.split.train.size + 1, seed=0)


def test_training_means(rng):
    ds = small_dataset(rng)
    means = training_means(ds)
    for m, mu in enumerate(means):
        direct = ds.modalities[m].data[:, ds.split.train].mean(axis=1)
        assert np.allclose(mu, direct, atol=1e-15)


# ---------------------------------------------------------------------------
# synthetic generator


def test_synth_shapes_and_balance():
    ds = synth_multimodal(4, 103, [6, 9], noise=0.1, seed=1)
    assert [m.feature_dim for m in ds.modalities] == [6, 9]
    assert ds.count == 103
    counts = np.bincount(ds.labels)
    assert counts.max() - counts.min() <= 1
    assert ds.split.query.size == round(0.2 * 103)
    assert ds.split.train.size + ds.split.query.size == 103


def test_synth_zero_noise_exactly_separable():
    ds = synth_multimodal(2, 30, [4, 3], noise=0.0, seed=5)
    for m in ds.modalities:
        for label in (0, 1):
            cols = m.data[:, ds.labels == label]
            assert np.abs(cols - cols[:, :1]).max() == 0.0
        gap = np.abs(
            m.data[:, ds.labels == 0][:, 0] - m.data[:, ds.labels == 1][:, 0]
        ).max()
        assert gap > 0.0


def test_synth_deterministic():
    a = synth_multimodal(3, 50, [4, 5], noise=0.2, seed=9)
    b = synth_multimodal(3, 50, [4, 5], noise=0.2, seed=9)
    assert np.array_equal(a.labels, b.labels)
    assert np.array_equal(a.split.train, b.split.train)
    for ma, mb in zip(a.modalities, b.modalities):
        assert np.array_equal(ma.data, mb.data)
    c = synth_multimodal(3, 50, [4, 5], noise=0.2, seed=10)
    assert not np.array_equal(a.modalities[0].data, c.modalities[0].data)


def test_synth_precondition_errors():
    with pytest.raises(DataFormatError):
        synth_multimodal(0, 10, [2, 2])
    with pytest.raises(DataFormatError):
        synth_multimodal(5, 4, [2, 2])
    with pytest.raises(DataFormatError):
        synth_multimodal(2, 10, [2])
    with pytest.raises(DataFormatError):
        synth_multimodal(2, 10, [2, 2], noise=-0.1)
    with pytest.raises(DataFormatError):
        synth_multimodal(2, 10, [2, 2], query_fraction=1.0)


def test_synth_query_fraction_keeps_training_nonempty():
    ds = synth_multimodal(2, 5, [2, 2], query_fraction=0.99)
    assert ds.split.train.size >= 1
