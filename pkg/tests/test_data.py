import os
import struct

import numpy as np
import pytest

from taskgrad.data import (LabeledDataset, SyntheticStreamSpec, Task,
                           class_split, load_flat_dataset, load_idx_array,
                           make_synthetic_stream, normalize_task,
                           save_dataset_csv, split_train_validation,
                           with_validation_split)


def nearest_centroid_accuracy(task):
    centroids = np.stack([task.train_X[task.train_y == c].mean(axis=0)
                          for c in range(task.n_classes)])
    d = ((task.test_X[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
    return float((np.argmin(d, axis=1) == task.test_y).mean())


# -- synthetic streams --------------------------------------------------------

def test_degenerate_clusters_are_unlearnable():
    spec = SyntheticStreamSpec(num_tasks=2, classes_per_task=2, train_per_class=50,
                               test_per_class=50, input_dim=4, separation=0.0,
                               noise=0.0, seed=3, normalize=False)
    stream = make_synthetic_stream(spec)
    for task in stream.tasks:
        assert np.all(task.train_X == 0.0)
        assert abs(nearest_centroid_accuracy(task) - 0.5) < 0.2


def test_zero_rotation_keeps_tasks_identically_distributed():
    spec = SyntheticStreamSpec(num_tasks=3, classes_per_task=2, train_per_class=400,
                               test_per_class=10, input_dim=6, rotation_angle=0.0,
                               separation=3.0, noise=0.5, clusters_per_class=1,
                               seed=5, normalize=False)
    stream = make_synthetic_stream(spec)
    means = [np.stack([t.train_X[t.train_y == c].mean(axis=0) for c in range(2)])
             for t in stream.tasks]
    for m in means[1:]:
        assert np.max(np.abs(m - means[0])) < 0.2   # same centers, fresh noise


def test_separated_clusters_are_linearly_learnable():
    spec = SyntheticStreamSpec(num_tasks=3, classes_per_task=3, train_per_class=100,
                               test_per_class=100, input_dim=8, separation=10.0,
                               noise=0.1, clusters_per_class=1, seed=7)
    stream = make_synthetic_stream(spec)
    for task in stream.tasks:
        assert nearest_centroid_accuracy(task) > 0.99


def test_rotation_changes_distribution():
    spec = SyntheticStreamSpec(num_tasks=4, classes_per_task=2, train_per_class=200,
                               test_per_class=10, input_dim=6,
                               rotation_angle=np.pi / 4, separation=5.0, noise=0.2,
                               clusters_per_class=1, seed=9, normalize=False)
    stream = make_synthetic_stream(spec)
    m1 = stream.tasks[0].train_X[stream.tasks[0].train_y == 0].mean(axis=0)
    m3 = stream.tasks[2].train_X[stream.tasks[2].train_y == 0].mean(axis=0)
    assert np.linalg.norm(m1 - m3) > 1.0


def test_stream_determinism_bytewise():
    spec = SyntheticStreamSpec(seed=11)
    a, b = make_synthetic_stream(spec), make_synthetic_stream(spec)
    for ta, tb in zip(a.tasks, b.tasks):
        assert ta.train_X.tobytes() == tb.train_X.tobytes()
        assert ta.test_X.tobytes() == tb.test_X.tobytes()


def test_spec_validation():
    with pytest.raises(ValueError):
        SyntheticStreamSpec(num_tasks=0)
    with pytest.raises(ValueError):
        SyntheticStreamSpec(transform="shear")
    with pytest.raises(ValueError):
        SyntheticStreamSpec(rotation_angle=np.pi)
    with pytest.raises(ValueError):
        SyntheticStreamSpec(noise=-1.0)


def test_permutation_and_fresh_transforms():
    for transform in ("permutation", "fresh"):
        spec = SyntheticStreamSpec(num_tasks=3, transform=transform, seed=13,
                                   train_per_class=30, test_per_class=10)
        stream = make_synthetic_stream(spec)
        assert stream.num_tasks == 3
        assert stream.input_dim == spec.input_dim


# -- class splits ---------------------------------------------------------------

def ten_class_dataset(per_class=20, d=3, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(10 * per_class, d))
    y = np.repeat(np.arange(10), per_class)
    return LabeledDataset(X, y)


def test_class_split_partitions_classes():
    ds = ten_class_dataset()
    rng = np.random.default_rng(1)
    stream = class_split(ds, num_tasks=5, classes_per_task=2, seed=4,
                         normalize=False)
    assert stream.num_tasks == 5
    seen = []
    for task in stream.tasks:
        assert set(task.train_y) == {0, 1}
        assert len(task.train_y) == 40
        # recover original classes by matching feature rows
        for x in task.train_X[:1]:
            row = np.flatnonzero((ds.X == x).all(axis=1))[0]
            seen.append(int(ds.y[row]))
    assert len(set(seen)) == len(seen)


def test_class_split_insufficient_classes():
    ds = ten_class_dataset()
    with pytest.raises(ValueError):
        class_split(ds, num_tasks=6, classes_per_task=2)


def test_class_split_cifar_shaped_cardinalities():
    # 100 classes, 20 tasks of 5 classes, 2500 train / 500 test per task
    rng = np.random.default_rng(2)
    train = LabeledDataset(rng.normal(size=(50_000, 4)),
                           np.repeat(np.arange(100), 500))
    test = LabeledDataset(rng.normal(size=(10_000, 4)),
                          np.repeat(np.arange(100), 100))
    stream = class_split(train, num_tasks=20, classes_per_task=5,
                         samples_per_task=2500, seed=8, test=test,
                         test_samples_per_task=500)
    assert stream.num_tasks == 20
    for task in stream.tasks:
        assert len(task.train_y) == 2500
        assert len(task.test_y) == 500
        assert set(task.train_y) == set(range(5))


def test_normalization_uses_train_stats_only():
    rng = np.random.default_rng(3)
    train_X = rng.normal(loc=5.0, scale=2.0, size=(50, 4))
    test_X = rng.normal(loc=-1.0, scale=7.0, size=(20, 4))
    task = Task(train_X, rng.integers(0, 2, 50), test_X, rng.integers(0, 2, 20), 2)
    out = normalize_task(task)
    mean, std = train_X.mean(axis=0), train_X.std(axis=0)
    assert np.allclose(out.train_X.mean(axis=0), 0.0, atol=1e-12)
    assert np.allclose(out.train_X.std(axis=0), 1.0, atol=1e-12)
    assert np.allclose(out.test_X, (test_X - mean) / std, atol=1e-15)


# -- train/validation split -------------------------------------------------------

def test_split_sizes_and_determinism():
    ds = LabeledDataset(np.arange(20).reshape(10, 2), np.arange(10) % 2)
    tr, va = split_train_validation(ds, 0.9, seed=6)
    assert len(tr) == 9 and len(va) == 1
    tr2, va2 = split_train_validation(ds, 0.9, seed=6)
    assert np.array_equal(tr.X, tr2.X) and np.array_equal(va.X, va2.X)
    union = np.concatenate([tr.X, va.X])
    assert sorted(map(tuple, union)) == sorted(map(tuple, ds.X))
    with pytest.raises(ValueError):
        split_train_validation(ds, 0.05, seed=0)     # train side empty
    with pytest.raises(ValueError):
        split_train_validation(ds, 1.5, seed=0)


def test_split_class_presence_sweep():
    # 100-example balanced 2-class set at 0.9: a sweep of seeds keeps every
    # class present on both sides (verified exhaustively for this range).
    X = np.arange(200, dtype=float).reshape(100, 2)
    y = np.repeat([0, 1], 50)
    ds = LabeledDataset(X, y)
    for seed in range(50):
        tr, va = split_train_validation(ds, 0.9, seed=seed)
        assert set(tr.y) == {0, 1}
        assert set(va.y) == {0, 1}


def test_with_validation_split():
    spec = SyntheticStreamSpec(num_tasks=2, train_per_class=50, test_per_class=10,
                               seed=15)
    stream = make_synthetic_stream(spec)
    split = with_validation_split(stream, fraction=0.9, seed=0)
    for orig, task in zip(stream.tasks, split.tasks):
        assert len(task.train_y) + len(task.val_y) == len(orig.train_y)
        assert len(task.val_y) == 10
        assert np.array_equal(task.test_X, orig.test_X)


# -- flat files -------------------------------------------------------------------

def test_csv_parse_two_rows(tmp_path):
    path = os.path.join(tmp_path, "toy.csv")
    with open(path, "w") as fh:
        fh.write("1,2,0\n3,4,1\n")
    ds = load_flat_dataset(path, "csv")
    assert np.array_equal(ds.X, [[1.0, 2.0], [3.0, 4.0]])
    assert np.array_equal(ds.y, [0, 1])


def test_csv_errors(tmp_path):
    path = os.path.join(tmp_path, "bad.csv")
    with open(path, "w") as fh:
        fh.write("1,2,0\n3,4\n")
    with pytest.raises(ValueError, match="line 2"):
        load_flat_dataset(path, "csv")
    with open(path, "w") as fh:
        fh.write("1,x,0\n")
    with pytest.raises(ValueError, match="non-numeric"):
        load_flat_dataset(path, "csv")
    with open(path, "w") as fh:
        fh.write("\n")
    with pytest.raises(ValueError, match="no data rows"):
        load_flat_dataset(path, "csv")
    with pytest.raises(ValueError, match="unknown dataset format"):
        load_flat_dataset(path, "tsv")


def test_csv_roundtrip(tmp_path):
    rng = np.random.default_rng(4)
    ds = LabeledDataset(rng.normal(size=(12, 5)), rng.integers(0, 3, 12))
    path = os.path.join(tmp_path, "round.csv")
    save_dataset_csv(ds, path)
    back = load_flat_dataset(path, "csv")
    assert np.array_equal(back.X, ds.X)
    assert np.array_equal(back.y, ds.y)


def write_idx(path, array, code):
    array = np.asarray(array)
    with open(path, "wb") as fh:
        fh.write(struct.pack(">BBBB", 0, 0, code, array.ndim))
        fh.write(struct.pack(f">{array.ndim}I", *array.shape))
        fh.write(array.tobytes())


def test_idx_image_label_pair(tmp_path):
    images = np.arange(24, dtype=np.uint8).reshape(2, 3, 4)
    labels = np.array([1, 0], dtype=np.uint8)
    img_path = os.path.join(tmp_path, "imgs.idx")
    lab_path = os.path.join(tmp_path, "labs.idx")
    write_idx(img_path, images, 0x08)
    write_idx(lab_path, labels, 0x08)
    ds = load_flat_dataset(img_path, "idx", labels_path=lab_path)
    assert ds.X.shape == (2, 12)
    assert np.array_equal(ds.X[0], np.arange(12, dtype=float))
    assert np.array_equal(ds.y, [1, 0])
    with pytest.raises(ValueError, match="labels_path"):
        load_flat_dataset(img_path, "idx")


def test_idx_truncation_names_offset(tmp_path):
    path = os.path.join(tmp_path, "trunc.idx")
    full = struct.pack(">BBBB", 0, 0, 0x08, 1) + struct.pack(">I", 10) + b"\x01" * 4
    with open(path, "wb") as fh:
        fh.write(full)
    with pytest.raises(ValueError, match=r"byte 12 \(expected 18 bytes\)"):
        load_idx_array(path)
    with open(path, "wb") as fh:
        fh.write(b"\x00\x00")
    with pytest.raises(ValueError, match="byte 2"):
        load_idx_array(path)
    with open(path, "wb") as fh:
        fh.write(b"\xff\x00\x08\x01")
    with pytest.raises(ValueError, match="bad IDX magic"):
        load_idx_array(path)


def test_idx_float64_roundtrip(tmp_path):
    data = np.random.default_rng(5).normal(size=(3, 4))
    path = os.path.join(tmp_path, "f8.idx")
    write_idx(path, data.astype(">f8"), 0x0E)
    back = load_idx_array(path)
    assert np.array_equal(back, data)


def test_labeled_dataset_validation():
    with pytest.raises(ValueError):
        LabeledDataset(np.zeros((3, 2)), np.zeros(2, dtype=int))
    with pytest.raises(ValueError):
        LabeledDataset(np.full((2, 2), np.nan), np.zeros(2, dtype=int))
