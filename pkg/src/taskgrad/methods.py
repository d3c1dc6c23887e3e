"""Baseline lifelong-learning methods and their composition with any optimizer.

Each method is a small stateful wrapper that rewrites the raw batch gradient
(quadratic penalty, projection, or replay averaging) before the optimizer
consumes it, so every method composes with every optimizer, including the
task-aware ones.
"""

import csv

import numpy as np
from dataclasses import dataclass

from .net import TaskBatch, loss_and_grad

REF_NORM_FLOOR = 1e-12


class EpisodicMemory:
    """Per (task, class) reservoir buffers of past examples.

    Each buffer keeps at most capacity_per_class examples; after warm-up, the
    k-th example seen for a class replaces a uniformly random slot with
    probability capacity/k, so every example of the class is retained with
    equal probability.
    """

    def __init__(self, capacity_per_class, rng=None):
        if capacity_per_class < 1:
            raise ValueError(f"capacity per class must be >= 1, got {capacity_per_class}")
        self.capacity = int(capacity_per_class)
        self.rng = rng if rng is not None else np.random.default_rng()
        self.buffers = {}      # (task_id, class_id) -> list of feature vectors
        self.seen = {}

    def insert(self, x, task_id, class_id):
        key = (int(task_id), int(class_id))
        x = np.asarray(x, dtype=np.float64)
        buf = self.buffers.setdefault(key, [])
        self.seen[key] = self.seen.get(key, 0) + 1
        k = self.seen[key]
        if len(buf) < self.capacity:
            buf.append(x.copy())
        else:
            j = int(self.rng.integers(k))
            if j < self.capacity:
                buf[j] = x.copy()

    def insert_batch(self, batch):
        for x, cls in zip(batch.X, batch.y):
            self.insert(x, batch.task_id, int(cls))

    def num_stored(self, exclude_task=None):
        return sum(len(buf) for (task, _), buf in self.buffers.items()
                   if task != exclude_task)

    def sample(self, batch_size, exclude_task=None):
        """Batches drawn uniformly from all buffers outside exclude_task.

        Sampling is without replacement when enough examples are stored,
        with replacement otherwise. Returns a list of single-task batches
        (grouped for head routing); empty list if nothing qualifies.
        """
        pool = []
        for (task, cls), buf in sorted(self.buffers.items()):
            if task == exclude_task:
                continue
            pool.extend((task, cls, x) for x in buf)
        if not pool:
            return []
        if len(pool) >= batch_size:
            idx = self.rng.choice(len(pool), size=batch_size, replace=False)
        else:
            idx = self.rng.choice(len(pool), size=batch_size, replace=True)
        groups = {}
        for i in idx:
            task, cls, x = pool[int(i)]
            groups.setdefault(task, []).append((x, cls))
        batches = []
        for task in sorted(groups):
            xs, ys = zip(*groups[task])
            batches.append(TaskBatch(np.stack(xs), task, np.array(ys)))
        return batches

    def to_csv(self, path):
        """Dump contents as rows of task, class, feature values."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["task", "class", "features..."])
            for (task, cls), buf in sorted(self.buffers.items()):
                for x in buf:
                    w.writerow([task, cls] + [repr(float(v)) for v in x])


@dataclass
class FisherAnchor:
    """Diagonal Fisher estimate and the parameters it anchors, for one task."""

    task_id: int
    fisher: np.ndarray
    theta_star: np.ndarray


def fisher_estimate(net, X, y, task_id, cap=None):
    """Diagonal Fisher at the current parameters: mean of squared per-example loss gradients."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if len(X) == 0:
        raise ValueError("cannot estimate Fisher information from empty data")
    if cap is not None:
        X, y = X[:cap], y[:cap]
    fisher = np.zeros(net.num_params, dtype=np.float64)
    for i in range(len(X)):
        _, g = loss_and_grad(net, TaskBatch(X[i:i + 1], task_id, y[i:i + 1]))
        fisher += g * g
    fisher /= len(X)
    return FisherAnchor(task_id, fisher, net.get_flat())


def ewc_penalized_grad(g, theta, anchors, lam):
    """g plus the quadratic-penalty gradient lam * sum_a F_a * (theta - theta*_a)."""
    if lam == 0.0 or not anchors:
        return g
    penalty = np.zeros_like(g)
    for a in anchors:
        if a.fisher.shape != g.shape or a.theta_star.shape != theta.shape:
            raise ValueError("anchor shape does not match parameter vector")
        penalty += a.fisher * (theta - a.theta_star)
    return g + lam * penalty


def agem_project(g, g_ref):
    """Project g so it no longer conflicts with the reference gradient.

    If the dot product is already nonnegative g passes through untouched;
    otherwise the component along g_ref is removed. A vanishing reference
    carries no constraint.
    """
    g = np.asarray(g, dtype=np.float64)
    g_ref = np.asarray(g_ref, dtype=np.float64)
    if g.shape != g_ref.shape:
        raise ValueError(f"shape mismatch: {g.shape} vs {g_ref.shape}")
    if np.linalg.norm(g_ref) < REF_NORM_FLOOR:
        return g
    dot = float(np.dot(g, g_ref))
    if dot >= 0.0:
        return g
    return g - (dot / float(np.dot(g_ref, g_ref))) * g_ref


def er_combined_grad(g_batch, g_mem):
    """Replay average (g_batch + g_mem) / 2."""
    if g_batch.shape != g_mem.shape:
        raise ValueError(f"shape mismatch: {g_batch.shape} vs {g_mem.shape}")
    return (g_batch + g_mem) / 2.0


@dataclass
class StableSgdSchedule:
    """Per-task learning-rate decay plus a dropout setting for plain SGD."""

    init_lr: float
    decay_per_task: float = 0.9
    dropout_rate: float = 0.0

    def __post_init__(self):
        if self.init_lr <= 0:
            raise ValueError(f"init_lr must be > 0, got {self.init_lr}")
        if not 0.0 < self.decay_per_task <= 1.0:
            raise ValueError(f"decay must be in (0, 1], got {self.decay_per_task}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError(f"dropout must be in [0, 1), got {self.dropout_rate}")


def stable_sgd_lr(schedule, task_index):
    """Learning rate for 1-based task_index: init_lr * decay^(index - 1)."""
    if task_index < 1:
        raise ValueError(f"task index must be >= 1, got {task_index}")
    return schedule.init_lr * schedule.decay_per_task ** (task_index - 1)


def memory_gradient(net, groups, train=False, rng=None):
    """Gradient of the mean loss over a multi-task memory batch.

    Each group is a single-task batch; group gradients are combined weighted
    by group size, which equals differentiating the mean over all examples.
    """
    total = sum(len(b) for b in groups)
    g = np.zeros(net.num_params, dtype=np.float64)
    for b in groups:
        _, gb = loss_and_grad(net, b, train=train, rng=rng)
        g += (len(b) / total) * gb
    return g


# -- method wrappers ----------------------------------------------------------


class NaiveMethod:
    """No continual-learning machinery; gradients pass through untouched."""

    def start_task(self, net, task_id, optimizer):
        pass

    def transform_grad(self, g, net, batch, train=False, rng=None):
        return g

    def after_batch(self, batch):
        pass

    def end_task(self, net, task_id, X, y):
        pass


class EWCMethod(NaiveMethod):
    """Quadratic penalty toward each finished task's parameters, weighted by its Fisher diagonal."""

    def __init__(self, lam, fisher_cap=1000):
        self.lam = float(lam)
        self.fisher_cap = fisher_cap
        self.anchors = []

    def transform_grad(self, g, net, batch, train=False, rng=None):
        return ewc_penalized_grad(g, net.theta, self.anchors, self.lam)

    def end_task(self, net, task_id, X, y):
        self.anchors.append(fisher_estimate(net, X, y, task_id, cap=self.fisher_cap))


class AGEMMethod(NaiveMethod):
    """Gradient projection against a reference gradient from replayed past examples."""

    def __init__(self, memory, batch_size):
        self.memory = memory
        self.batch_size = batch_size

    def transform_grad(self, g, net, batch, train=False, rng=None):
        groups = self.memory.sample(self.batch_size, exclude_task=batch.task_id)
        if not groups:
            return g
        g_ref = memory_gradient(net, groups, train=train, rng=rng)
        return agem_project(g, g_ref)

    def after_batch(self, batch):
        self.memory.insert_batch(batch)


class ERMethod(NaiveMethod):
    """Average the batch gradient with a replayed past-task gradient."""

    def __init__(self, memory, batch_size):
        self.memory = memory
        self.batch_size = batch_size

    def transform_grad(self, g, net, batch, train=False, rng=None):
        groups = self.memory.sample(self.batch_size, exclude_task=batch.task_id)
        if not groups:
            return g
        g_mem = memory_gradient(net, groups, train=train, rng=rng)
        return er_combined_grad(g, g_mem)

    def after_batch(self, batch):
        self.memory.insert_batch(batch)


class StableSGDMethod(NaiveMethod):
    """Decay the optimizer's learning rate at every task boundary."""

    def __init__(self, schedule):
        self.schedule = schedule

    def start_task(self, net, task_id, optimizer):
        optimizer.lr = stable_sgd_lr(self.schedule, task_id)


def hybrid_step(net, batch, method, optimizer, train=True, rng=None):
    """One training step: method-modified gradient fed to the optimizer.

    The method first rewrites the raw gradient (penalty, projection, or
    replay average); the optimizer then consumes the modified gradient, so a
    task-aware optimizer accumulates its moments from the modified gradient
    as well. Replay memories are updated after the parameter step.
    """
    value, g = loss_and_grad(net, batch, train=train, rng=rng)
    g = method.transform_grad(g, net, batch, train=train, rng=rng)
    net.set_flat(optimizer.step(net.theta, g))
    method.after_batch(batch)
    return value
