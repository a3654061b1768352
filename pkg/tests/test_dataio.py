from collections import Counter

import numpy as np
import pytest
from sklearn.tree import DecisionTreeClassifier

from convboost.dataio import (AugmentConfig, Dataset, ImageSample, augment, load_dataset, preprocess,
                              read_features_csv, read_pgm, save_dataset, stratified_test_counts,
                              synthesize_dataset, to_one_hot, train_test_split, write_features_csv,
                              write_pgm)
from convboost.errors import ConfigError, DataError, LabelError, LoadError


def tiny_dataset(n=10, classes=("a", "b"), side=12, seed=0):
    r = np.random.default_rng(seed)
    samples = [ImageSample(f"s{i}", np.round(r.uniform(0, 255, (side, side))), i % len(classes))
               for i in range(n)]
    return Dataset(samples, list(classes))


def test_load_three_row_manifest(tmp_path):
    for i in range(3):
        write_pgm(tmp_path / f"{i}.pgm", np.full((4, 5), 10.0 * i))
    (tmp_path / "m.csv").write_text("id,path,class_name\na,0.pgm,x\nb,1.pgm,y\nc,2.pgm,z\n")
    ds = load_dataset(tmp_path / "m.csv")
    assert len(ds) == 3 and ds.class_count == 3
    assert ds.class_names == ["x", "y", "z"] and ds.ids == ["a", "b", "c"]
    assert ds.samples[2].pixels.shape == (4, 5) and ds.samples[2].pixels[0, 0] == 20


def test_load_errors(tmp_path):
    (tmp_path / "empty.csv").write_text("id,path,class_name\n")
    with pytest.raises(LoadError):
        load_dataset(tmp_path / "empty.csv")
    (tmp_path / "missing.csv").write_text("id,path,class_name\nrow7,nothere.pgm,x\n")
    with pytest.raises(LoadError, match="row7"):
        load_dataset(tmp_path / "missing.csv")
    (tmp_path / "junk.pgm").write_bytes(b"not an image")
    (tmp_path / "junk.csv").write_text("id,path,class_name\nj,junk.pgm,x\n")
    with pytest.raises(LoadError, match="j"):
        load_dataset(tmp_path / "junk.csv")
    (tmp_path / "hdr.csv").write_text("name,file\n")
    with pytest.raises(LoadError):
        load_dataset(tmp_path / "hdr.csv")


def test_save_load_round_trip(tmp_path):
    ds = tiny_dataset(6, ("p", "q", "r"))
    loaded = load_dataset(save_dataset(ds, tmp_path / "out"))
    assert loaded.ids == ds.ids and loaded.class_names == ds.class_names
    assert np.array_equal(loaded.labels, ds.labels)
    for a, b in zip(loaded.samples, ds.samples):
        assert np.array_equal(a.pixels, b.pixels)


def test_pgm_round_trip(tmp_path):
    px = np.arange(0, 240, dtype=float).reshape(12, 20)
    write_pgm(tmp_path / "x.pgm", px)
    assert np.array_equal(read_pgm(tmp_path / "x.pgm"), px)
    assert (tmp_path / "x.pgm").read_bytes().startswith(b"P5")


def test_dataset_invariants():
    with pytest.raises(DataError):
        Dataset([], [])
    with pytest.raises(LabelError):
        Dataset([ImageSample("a", np.zeros((2, 2)), 3)], ["x"])
    with pytest.raises(DataError):
        Dataset([ImageSample("a", np.zeros((2, 2)), 0)] * 2, ["x"])
    with pytest.raises(DataError):
        ImageSample("a", np.full((2, 2), 300.0), 0)


def test_synthesize_counts_and_determinism():
    a = synthesize_dataset(7, 100, 3, 32)
    b = synthesize_dataset(7, 100, 3, 32)
    assert len(a) == 300 and Counter(a.labels.tolist()) == {0: 100, 1: 100, 2: 100}
    assert a.ids == b.ids and all(np.array_equal(x.pixels, y.pixels) for x, y in zip(a.samples, b.samples))
    assert not np.array_equal(a.samples[0].pixels, synthesize_dataset(8, 100, 3, 32).samples[0].pixels)
    for bad in [(0, 3, 32), (10, 1, 32), (10, 6, 32), (10, 3, 15)]:
        with pytest.raises(ConfigError):
            synthesize_dataset(0, *bad)


def quadrant_means(pixels):
    h, w = pixels.shape
    return [pixels[:h // 2, :w // 2].mean(), pixels[:h // 2, w // 2:].mean(),
            pixels[h // 2:, :w // 2].mean(), pixels[h // 2:, w // 2:].mean()]


@pytest.mark.parametrize("classes", [2, 3, 5])
def test_synthetic_task_is_separable(classes):
    ds = synthesize_dataset(7, 100, classes, 32)
    x = np.array([quadrant_means(s.pixels) for s in ds.samples])
    clf = DecisionTreeClassifier(max_depth=2, random_state=0).fit(x, ds.labels)
    acc = clf.score(x, ds.labels)
    # A depth-2 tree has at most 4 leaves, so 5 classes cap out at 0.8.
    assert acc >= (0.9 if classes <= 4 else 0.75)


def test_preprocess_constant_image_is_zero():
    out = preprocess(np.full((20, 20), 255.0), 16)
    assert out.shape == (16, 16, 3) and not out.any()


def test_preprocess_channels_and_moments(rng):
    out = preprocess(ImageSample("x", rng.uniform(0, 255, (40, 30)), 0), 24)
    assert out.shape == (24, 24, 3)
    assert np.array_equal(out[:, :, 0], out[:, :, 1]) and np.array_equal(out[:, :, 1], out[:, :, 2])
    assert abs(out.mean()) < 1e-6 and abs(out.std() - 1) < 1e-3


def test_preprocess_half_dark_half_bright():
    # Left half 0, right half 255: scaled values {0, 1}, mean 0.5, std 0.5 -> exactly -1 / +1.
    img = np.zeros((8, 8))
    img[:, 4:] = 255.0
    out = preprocess(img, 8)
    expected = np.where(np.arange(8) < 4, -1.0, 1.0)[None, :, None] * np.ones((8, 8, 3))
    np.testing.assert_allclose(out, expected, rtol=0, atol=1e-15)
    with pytest.raises(ConfigError):
        preprocess(img, 4)


def test_augment_counts_and_labels():
    ds = tiny_dataset(10)
    out = augment(ds, AugmentConfig(copies_per_image=3, seed=1))
    assert len(out) == 40
    by_id = {s.id: s for s in ds.samples}
    for s in out.samples:
        assert s.label == by_id[s.id.split("#")[0]].label
        assert s.pixels.shape == (12, 12) and s.pixels.min() >= 0 and s.pixels.max() <= 255
    assert Counter(out.labels.tolist()) == {0: 20, 1: 20}
    assert augment(ds, AugmentConfig(copies_per_image=0)) is ds
    again = augment(ds, AugmentConfig(copies_per_image=3, seed=1))
    assert all(np.array_equal(a.pixels, b.pixels) for a, b in zip(out.samples, again.samples))
    assert len(augment(ds, AugmentConfig(copies_per_image=3, keep_originals=False))) == 30


def test_augment_transform_bounds():
    with pytest.raises(ConfigError):
        AugmentConfig(max_rotation=20)
    with pytest.raises(ConfigError):
        AugmentConfig(copies_per_image=-1)


def test_split_counts_and_partition():
    ds = tiny_dataset(200)
    train, test = train_test_split(ds, 0.1, seed=3)
    assert len(test) == 20 and len(train) == 180
    assert Counter(test.labels.tolist()) == {0: 10, 1: 10}
    assert set(train.ids) | set(test.ids) == set(ds.ids) and not set(train.ids) & set(test.ids)
    t2 = train_test_split(ds, 0.1, seed=3)[1]
    assert t2.ids == test.ids


def test_split_is_stratified_within_one(rng):
    for _ in range(30):
        sizes = rng.integers(1, 60, size=int(rng.integers(2, 6))).tolist()
        frac = float(rng.uniform(0.05, 0.5))
        counts = stratified_test_counts(sizes, frac)
        for c, s in zip(counts, sizes):
            assert abs(c - frac * s) <= 1


def test_split_of_large_augmented_set():
    assert sum(stratified_test_counts([708 * 3, 1426 * 3, 930 * 3], 0.1)) == 920


def test_split_empty_side_is_config_error():
    with pytest.raises(ConfigError):
        train_test_split(tiny_dataset(4), 0.99, seed=0)  # train side empty
    with pytest.raises(ConfigError):
        train_test_split(tiny_dataset(4), 1.0, seed=0)


def test_one_hot():
    np.testing.assert_array_equal(to_one_hot([2], 3), [[0, 0, 1]])
    labels = np.array([0, 2, 1, 1, 0])
    oh = to_one_hot(labels, 3)
    assert np.all(oh.sum(axis=1) == 1) and np.array_equal(oh.argmax(axis=1), labels)
    with pytest.raises(LabelError):
        to_one_hot([3], 3)


def test_features_csv_round_trip(tmp_path, rng):
    feats = rng.normal(size=(4, 3)) * 1e-7
    write_features_csv(tmp_path / "f.csv", ["a", "b", "c", "d"], [0, 1, 2, 0], feats)
    assert (tmp_path / "f.csv").read_text().splitlines()[0] == "id,label,f0,f1,f2"
    ids, labels, back = read_features_csv(tmp_path / "f.csv")
    assert ids == ["a", "b", "c", "d"] and labels.tolist() == [0, 1, 2, 0]
    assert np.array_equal(back, feats)
