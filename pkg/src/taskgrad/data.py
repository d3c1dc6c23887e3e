"""Task-stream construction: synthetic generators, class splits, flat files.

The synthetic streams are Gaussian-cluster classification tasks whose
between-task relationship is controllable (rotation in a fixed plane,
feature permutation, or fresh clusters). That relatedness knob is exactly
what correlation-weighted optimizers respond to, so these desk-scale streams
stand in for the large image benchmarks.
"""

import struct

import numpy as np
from dataclasses import dataclass, field

STD_FLOOR = 1e-12


@dataclass
class LabeledDataset:
    """Feature matrix plus integer labels in [0, C)."""

    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.int64)
        if self.X.ndim != 2:
            raise ValueError(f"features must be 2-D, got shape {self.X.shape}")
        if len(self.X) != len(self.y):
            raise ValueError(f"{len(self.X)} feature rows vs {len(self.y)} labels")
        if not np.isfinite(self.X).all():
            raise ValueError("features contain NaN or Inf")

    def __len__(self):
        return len(self.y)

    @property
    def num_classes(self):
        return int(self.y.max()) + 1 if len(self.y) else 0


@dataclass
class Task:
    """One task of a stream: train/test (and optional validation) arrays."""

    train_X: np.ndarray
    train_y: np.ndarray
    test_X: np.ndarray
    test_y: np.ndarray
    n_classes: int
    val_X: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    val_y: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))


@dataclass
class TaskStream:
    """Ordered tasks with disjoint label spaces; tasks are 1-based."""

    tasks: list

    @property
    def num_tasks(self):
        return len(self.tasks)

    @property
    def input_dim(self):
        return self.tasks[0].train_X.shape[1]

    @property
    def classes_per_task(self):
        return self.tasks[0].n_classes

    def task(self, task_id):
        return self.tasks[task_id - 1]


def normalize_task(task):
    """Z-score every feature from the task's train statistics.

    Validation and test reuse the train mean/std, so no information leaks
    backward from held-out data. Near-constant features keep unit scale.
    """
    mean = task.train_X.mean(axis=0)
    std = task.train_X.std(axis=0)
    std = np.where(std < STD_FLOOR, 1.0, std)
    scale = lambda A: (A - mean) / std if len(A) else A
    return Task(scale(task.train_X), task.train_y, scale(task.test_X), task.test_y,
                task.n_classes, scale(task.val_X), task.val_y)


@dataclass
class SyntheticStreamSpec:
    """Recipe for a synthetic stream of Gaussian-cluster tasks.

    Class structure is a wheel of clusters: classes_per_task *
    clusters_per_class lobes sit evenly spaced on a circle of radius
    `separation` inside a seeded random 2-plane, class labels alternating
    around the wheel (clusters_per_class > 1 makes classes non-linearly
    separable). transform picks how task t relates to task 1: "rotation"
    spins the wheel by (t-1) * rotation_angle radians, so the class
    geometry itself moves and between-task relatedness falls off with the
    angle; "permutation" shuffles feature coordinates; "fresh" scatters the
    lobes in new random directions every task. noise is the isotropic
    within-cluster spread.
    """

    num_tasks: int = 5
    classes_per_task: int = 2
    train_per_class: int = 200
    test_per_class: int = 100
    input_dim: int = 16
    transform: str = "rotation"
    rotation_angle: float = np.pi / 12
    separation: float = 2.2
    noise: float = 0.9
    clusters_per_class: int = 2
    seed: int = 1
    normalize: bool = True

    def __post_init__(self):
        for name in ("num_tasks", "classes_per_task", "train_per_class",
                     "test_per_class", "input_dim", "clusters_per_class"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.transform not in ("rotation", "permutation", "fresh"):
            raise ValueError(f"unknown transform '{self.transform}'")
        if not 0.0 <= self.rotation_angle < np.pi:
            raise ValueError(
                f"rotation angle must be in [0, pi), got {self.rotation_angle}")
        if self.separation < 0 or self.noise < 0:
            raise ValueError("separation and noise must be nonnegative")
        if self.input_dim < 2:
            raise ValueError("cluster wheel needs input_dim >= 2")


def benchmark_stream(seed=1):
    """The desk-scale benchmark: five 15-degree-rotated two-class cluster wheels.

    The defaults of SyntheticStreamSpec encode it; seed 1 is the canonical
    instance, on which plain RMSProp loses around six accuracy points of
    earlier-task performance over the stream.
    """
    return make_synthetic_stream(SyntheticStreamSpec(seed=seed))


def _lobe_counts(per_class, lobes):
    """Split a per-class count across its lobes, earlier lobes get the remainder."""
    base, extra = divmod(per_class, lobes)
    return [base + (1 if i < extra else 0) for i in range(lobes)]


def make_synthetic_stream(spec):
    """Deterministic task stream from a SyntheticStreamSpec."""
    rng = np.random.default_rng(spec.seed)
    d, C, k = spec.input_dim, spec.classes_per_task, spec.clusters_per_class
    n_lobes = C * k
    plane_q, _ = np.linalg.qr(rng.normal(size=(d, 2)))
    u, v = plane_q[:, 0], plane_q[:, 1]
    base_angle = rng.uniform(0.0, 2.0 * np.pi)
    lobe_angles = base_angle + 2.0 * np.pi * np.arange(n_lobes) / n_lobes
    lobe_class = np.arange(n_lobes) % C
    counts = _lobe_counts(spec.train_per_class, k), _lobe_counts(spec.test_per_class, k)

    def wheel_centers(offset):
        ang = lobe_angles + offset
        return spec.separation * (np.cos(ang)[:, None] * u[None, :]
                                  + np.sin(ang)[:, None] * v[None, :])

    tasks = []
    for t in range(spec.num_tasks):
        if spec.transform == "rotation":
            centers = wheel_centers(t * spec.rotation_angle)
        elif spec.transform == "permutation":
            perm = np.arange(d) if t == 0 else rng.permutation(d)
            centers = wheel_centers(0.0)[:, perm]
        else:
            raw = rng.normal(size=(n_lobes, d))
            raw /= np.linalg.norm(raw, axis=1, keepdims=True)
            centers = raw * spec.separation

        def sample(per_lobe_counts):
            Xs, ys = [], []
            for lobe in range(n_lobes):
                n = per_lobe_counts[lobe // C]
                Xs.append(centers[lobe] + spec.noise * rng.normal(size=(n, d)))
                ys.append(np.full(n, lobe_class[lobe], dtype=np.int64))
            return np.concatenate(Xs), np.concatenate(ys)

        train_X, train_y = sample(counts[0])
        test_X, test_y = sample(counts[1])
        task = Task(train_X, train_y, test_X, test_y, C)
        tasks.append(normalize_task(task) if spec.normalize else task)
    return TaskStream(tasks)


def class_split(train, num_tasks, classes_per_task, samples_per_task=None, seed=0,
                test=None, test_samples_per_task=None, normalize=True):
    """Split a dataset into tasks over disjoint classes.

    Classes are assigned to tasks in a seeded shuffled order; within each
    task labels are remapped to [0, classes_per_task). Sample caps are
    applied per class (samples_per_task // classes_per_task each, seeded
    subsample) so tasks stay balanced. An optional test dataset is split
    with the same class assignment.
    """
    classes = np.sort(np.unique(train.y))
    if num_tasks * classes_per_task > len(classes):
        raise ValueError(
            f"need {num_tasks * classes_per_task} classes for {num_tasks} tasks "
            f"of {classes_per_task}, dataset has {len(classes)}")
    rng = np.random.default_rng(seed)
    order = rng.permutation(classes)

    def take(ds, task_classes, per_task_cap):
        xs, ys = [], []
        per_class = None if per_task_cap is None else per_task_cap // classes_per_task
        for local, cls in enumerate(task_classes):
            idx = np.flatnonzero(ds.y == cls)
            if per_class is not None:
                if len(idx) < per_class:
                    raise ValueError(
                        f"class {cls} has {len(idx)} examples, need {per_class}")
                idx = rng.permutation(idx)[:per_class]
            xs.append(ds.X[idx])
            ys.append(np.full(len(idx), local, dtype=np.int64))
        return np.concatenate(xs), np.concatenate(ys)

    tasks = []
    for t in range(num_tasks):
        task_classes = order[t * classes_per_task:(t + 1) * classes_per_task]
        train_X, train_y = take(train, task_classes, samples_per_task)
        if test is not None:
            test_X, test_y = take(test, task_classes, test_samples_per_task)
        else:
            test_X = np.zeros((0, train.X.shape[1]))
            test_y = np.zeros(0, dtype=np.int64)
        task = Task(train_X, train_y, test_X, test_y, classes_per_task)
        tasks.append(normalize_task(task) if normalize else task)
    return TaskStream(tasks)


def split_train_validation(dataset, fraction, seed):
    """Seeded shuffle-and-split into (train, validation) with `fraction` train share."""
    if not 0.0 < fraction < 1.0:
        raise ValueError(f"fraction must be in (0, 1), got {fraction}")
    n = len(dataset)
    n_train = int(n * fraction)
    if n_train == 0 or n_train == n:
        raise ValueError(
            f"fraction {fraction} leaves an empty side for {n} examples")
    order = np.random.default_rng(seed).permutation(n)
    tr, va = order[:n_train], order[n_train:]
    return (LabeledDataset(dataset.X[tr], dataset.y[tr]),
            LabeledDataset(dataset.X[va], dataset.y[va]))


def with_validation_split(stream, fraction=0.9, seed=0):
    """Stream copy whose tasks train on `fraction` of train data, rest as validation."""
    tasks = []
    for i, task in enumerate(stream.tasks):
        ds = LabeledDataset(task.train_X, task.train_y)
        tr, va = split_train_validation(ds, fraction, seed + i)
        tasks.append(Task(tr.X, tr.y, task.test_X, task.test_y, task.n_classes,
                          va.X, va.y))
    return TaskStream(tasks)


# -- flat files -----------------------------------------------------------------

_IDX_DTYPES = {0x08: ("u1", 1), 0x09: ("i1", 1), 0x0B: (">i2", 2),
               0x0C: (">i4", 4), 0x0D: (">f4", 4), 0x0E: (">f8", 8)}


def load_idx_array(path):
    """Array from an IDX file (big-endian, magic 0x0000<dtype><ndim>)."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 4:
        raise ValueError(f"{path}: truncated IDX header at byte {len(raw)} "
                         "(need 4 magic bytes)")
    zero1, zero2, code, ndim = raw[0], raw[1], raw[2], raw[3]
    if zero1 != 0 or zero2 != 0 or code not in _IDX_DTYPES:
        raise ValueError(f"{path}: bad IDX magic {raw[:4].hex()} at byte 0")
    header_end = 4 + 4 * ndim
    if len(raw) < header_end:
        raise ValueError(f"{path}: truncated IDX dimensions at byte {len(raw)} "
                         f"(need {header_end} bytes)")
    dims = struct.unpack(f">{ndim}I", raw[4:header_end])
    dtype, itemsize = _IDX_DTYPES[code]
    expected = header_end + int(np.prod(dims)) * itemsize
    if len(raw) < expected:
        raise ValueError(f"{path}: truncated IDX data at byte {len(raw)} "
                         f"(expected {expected} bytes)")
    data = np.frombuffer(raw, dtype=dtype, count=int(np.prod(dims)),
                         offset=header_end)
    return data.reshape(dims).astype(np.float64)


def load_flat_dataset(path, fmt="csv", labels_path=None):
    """Dataset from a flat file.

    csv: one example per row, label in the last column. idx: `path` holds
    the feature array (examples are flattened), `labels_path` the labels.
    """
    if fmt == "csv":
        return _load_csv(path)
    if fmt == "idx":
        if labels_path is None:
            raise ValueError("idx format needs labels_path for the label file")
        X = load_idx_array(path)
        y = load_idx_array(labels_path)
        if y.ndim != 1:
            raise ValueError(f"{labels_path}: labels must be 1-D, got shape {y.shape}")
        return LabeledDataset(X.reshape(len(X), -1), y.astype(np.int64))
    raise ValueError(f"unknown dataset format '{fmt}' (expected csv or idx)")


def _load_csv(path):
    features, labels = [], []
    width = None
    offset = 0
    with open(path, "rb") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.decode("utf-8").strip()
            if line:
                cells = line.split(",")
                if width is None:
                    width = len(cells)
                elif len(cells) != width:
                    raise ValueError(
                        f"{path}: line {lineno} (byte {offset}) has {len(cells)} "
                        f"columns, expected {width}")
                try:
                    values = [float(c) for c in cells]
                except ValueError:
                    raise ValueError(
                        f"{path}: line {lineno} (byte {offset}) has a non-numeric cell")
                features.append(values[:-1])
                labels.append(int(values[-1]))
            offset += len(raw)
    if not features:
        raise ValueError(f"{path}: no data rows")
    return LabeledDataset(np.array(features), np.array(labels))


def save_dataset_csv(dataset, path):
    """Write one example per row, label last, full float precision."""
    with open(path, "w") as fh:
        for x, label in zip(dataset.X, dataset.y):
            fh.write(",".join(repr(float(v)) for v in x) + f",{int(label)}\n")
