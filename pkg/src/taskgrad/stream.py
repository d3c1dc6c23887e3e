"""Task-incremental training loop, evaluation protocol, and metrics.

A run trains tasks strictly in order, evaluates every seen task after each
task boundary, and derives all reported numbers from the resulting
lower-triangular accuracy matrix. Runs are bitwise deterministic given
(stream, config, seed).
"""

import itertools
import time

import numpy as np
from dataclasses import dataclass, field, replace

from .data import with_validation_split
from .methods import (AGEMMethod, EpisodicMemory, ERMethod, EWCMethod,
                      NaiveMethod, StableSgdSchedule, StableSGDMethod,
                      hybrid_step)
from .net import MultiHeadNet, TaskBatch, loss_and_grad
from .optim import OPTIMIZER_NAMES, OptimConfig, make_optimizer

# substream tags so every random decision has its own seeded generator
_NET, _SHUFFLE, _MEMORY, _DROPOUT = 1, 2, 3, 4

BASE_METHODS = ("ewc", "agem", "er")
METHOD_NAMES = ("naive-sgd", "naive-adagrad", "naive-rmsprop", "naive-adam",
                "tag-adagrad", "tag-rmsprop", "tag-adam",
                "ewc", "agem", "er", "stable-sgd", "multitask")


def parse_method(name):
    """Resolve a method string to (wrapper kind, inner optimizer name).

    Bare optimizer methods ("naive-*", "tag-*") use no wrapper; the classic
    baselines default to an SGD inner update; "base+optimizer" builds a
    hybrid, e.g. "er+tag-rmsprop".
    """
    if name in METHOD_NAMES:
        if name.startswith("naive-"):
            return "naive", name[len("naive-"):]
        if name.startswith("tag-"):
            return "naive", name
        if name == "multitask":
            return "multitask", "sgd"
        return name, "sgd"
    if "+" in name:
        base, inner = name.split("+", 1)
        if base in BASE_METHODS and inner in OPTIMIZER_NAMES:
            return base, inner
    raise ValueError(
        f"unknown method '{name}'; expected one of {METHOD_NAMES} or "
        f"<base>+<optimizer> with base in {BASE_METHODS}")


@dataclass
class RunConfig:
    """Everything one run needs besides the stream and the seed."""

    method: str = "naive-sgd"
    optim: OptimConfig = field(default_factory=OptimConfig)
    hidden: tuple = (32,)
    dropout: float = 0.0
    epochs_per_task: int = 1
    batch_size: int = 10
    mem_per_class: int = 1
    ewc_lambda: float = 1.0
    fisher_cap: int = 1000
    lr_decay: float = 0.9
    alpha_trace: str = "mean"

    def __post_init__(self):
        parse_method(self.method)
        if self.epochs_per_task < 1:
            raise ValueError(f"epochs_per_task must be >= 1, got {self.epochs_per_task}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.mem_per_class < 1:
            raise ValueError(f"mem_per_class must be >= 1, got {self.mem_per_class}")
        if self.alpha_trace not in ("mean", "full", "off"):
            raise ValueError(f"alpha_trace must be mean, full or off, "
                             f"got '{self.alpha_trace}'")


class AlphaTrace:
    """Correlation weights recorded per (current task, past task).

    Keeps running means of alpha_n(t, tau) over the steps n of task t; in
    "full" mode also the raw per-step values.
    """

    def __init__(self, mode="mean"):
        self.mode = mode
        self.sums = {}
        self.counts = {}
        self.full = [] if mode == "full" else None

    def record(self, t, alphas):
        for tau, a in enumerate(alphas, start=1):
            key = (t, tau)
            self.sums[key] = self.sums.get(key, 0.0) + float(a)
            self.counts[key] = self.counts.get(key, 0) + 1
        if self.full is not None:
            n = self.counts[(t, 1)]
            for tau, a in enumerate(alphas, start=1):
                self.full.append((t, tau, n, float(a)))

    def mean(self, t, tau):
        return self.sums[(t, tau)] / self.counts[(t, tau)]

    def rows(self):
        """(t, tau, mean, min over tau', max over tau') per recorded pair."""
        out = []
        for t in sorted({t for t, _ in self.sums}):
            taus = sorted(tau for tt, tau in self.sums if tt == t)
            means = {tau: self.mean(t, tau) for tau in taus}
            lo, hi = min(means.values()), max(means.values())
            out.extend((t, tau, means[tau], lo, hi) for tau in taus)
        return out


@dataclass
class RunResult:
    """Accuracy matrix plus the metrics derived from it for one seeded run."""

    matrix: np.ndarray
    accuracy: float
    forgetting: float
    learning_accuracy: float
    seed: int
    config: dict
    task_seconds: list
    steps_per_task: list
    alpha: AlphaTrace = None


# -- metrics -------------------------------------------------------------------

def _check_rows(matrix, t):
    if not 1 <= t <= matrix.shape[0]:
        raise ValueError(f"t={t} out of range for a {matrix.shape[0]}-task matrix")
    for row in range(t):
        if not np.isfinite(matrix[row, :row + 1]).all():
            raise ValueError(f"row {row + 1} of the accuracy matrix is incomplete")


def accuracy_at(matrix, t):
    """Average accuracy over tasks 1..t after training task t."""
    _check_rows(matrix, t)
    return float(np.mean(matrix[t - 1, :t]))


def forgetting_at(matrix, t):
    """Average drop from each earlier task's peak accuracy, after task t.

    The peak for task tau ranges over the rows where a[., tau] exists,
    i.e. t' in {tau, ..., t-1}. Undefined for t < 2.
    """
    if t < 2:
        raise ValueError(f"forgetting is undefined for t={t} (needs t >= 2)")
    _check_rows(matrix, t)
    total = 0.0
    for tau in range(1, t):
        peak = max(matrix[tp - 1, tau - 1] for tp in range(tau, t))
        total += peak - matrix[t - 1, tau - 1]
    return total / (t - 1)


def learning_accuracy_at(matrix, t):
    """Average of the diagonal entries a[tau, tau] for tau <= t."""
    _check_rows(matrix, t)
    return float(np.mean(np.diag(matrix)[:t]))


def evaluate_accuracy(net, X, y, task_id):
    """Top-1 accuracy within the task's own head; no parameter updates."""
    if len(y) == 0:
        raise ValueError(f"empty evaluation set for task {task_id}")
    return float((net.predict(X, task_id) == np.asarray(y)).mean())


# -- the training loop -----------------------------------------------------------

def _make_method(kind, cfg, seed):
    if kind == "naive":
        return NaiveMethod()
    if kind == "ewc":
        return EWCMethod(cfg.ewc_lambda, cfg.fisher_cap)
    if kind == "agem":
        memory = EpisodicMemory(cfg.mem_per_class, np.random.default_rng((seed, _MEMORY)))
        return AGEMMethod(memory, cfg.batch_size)
    if kind == "er":
        memory = EpisodicMemory(cfg.mem_per_class, np.random.default_rng((seed, _MEMORY)))
        return ERMethod(memory, cfg.batch_size)
    if kind == "stable-sgd":
        schedule = StableSgdSchedule(cfg.optim.lr, cfg.lr_decay, cfg.dropout)
        return StableSGDMethod(schedule)
    raise ValueError(f"unknown method kind '{kind}'")


def config_echo(cfg, seed):
    """Flat key/value echo that reproduces a run exactly."""
    echo = {"method": cfg.method, "seed": str(seed),
            "hidden": " ".join(str(h) for h in cfg.hidden),
            "dropout": repr(cfg.dropout),
            "epochs_per_task": str(cfg.epochs_per_task),
            "batch_size": str(cfg.batch_size),
            "lr": repr(cfg.optim.lr), "beta1": repr(cfg.optim.beta1),
            "beta2": repr(cfg.optim.beta2), "epsilon": repr(cfg.optim.epsilon),
            "b": repr(cfg.optim.b),
            "mem_per_class": str(cfg.mem_per_class),
            "ewc_lambda": repr(cfg.ewc_lambda),
            "fisher_cap": str(cfg.fisher_cap),
            "lr_decay": repr(cfg.lr_decay),
            "alpha_trace": cfg.alpha_trace}
    return echo


def run_stream(stream, cfg, seed, eval_on="test"):
    """Train every task in order and fill the accuracy matrix row by row.

    eval_on picks the held-out side used for the matrix: "test" for final
    reporting, "val" during hyperparameter search. Each task's data is
    reshuffled every epoch with a seed derived from (seed, task, epoch).
    """
    if eval_on not in ("test", "val"):
        raise ValueError(f"eval_on must be 'test' or 'val', got '{eval_on}'")
    kind, inner = parse_method(cfg.method)
    if kind == "multitask":
        raise ValueError("the multitask setting has no task order; "
                         "use multitask_upper_bound")
    T = stream.num_tasks
    net = MultiHeadNet(stream.input_dim, cfg.hidden, stream.classes_per_task, T,
                       dropout=cfg.dropout, seed=(seed, _NET))
    opt = make_optimizer(inner, cfg.optim, net.num_params)
    method = _make_method(kind, cfg, seed)
    dropout_rng = np.random.default_rng((seed, _DROPOUT))
    wants_trace = inner.startswith("tag-") and cfg.alpha_trace != "off"
    trace = AlphaTrace(cfg.alpha_trace) if wants_trace else None

    matrix = np.full((T, T), np.nan)
    task_seconds, steps_per_task = [], []
    for t in range(1, T + 1):
        tic = time.perf_counter()
        task = stream.task(t)
        method.start_task(net, t, opt)
        opt.start_task(t)
        n = len(task.train_y)
        steps = 0
        for epoch in range(cfg.epochs_per_task):
            order = np.random.default_rng((seed, _SHUFFLE, t, epoch)).permutation(n)
            for lo in range(0, n, cfg.batch_size):
                idx = order[lo:lo + cfg.batch_size]
                batch = TaskBatch(task.train_X[idx], t, task.train_y[idx])
                hybrid_step(net, batch, method, opt, train=True, rng=dropout_rng)
                if trace is not None:
                    trace.record(t, opt.last_alphas)
                steps += 1
        opt.end_task()
        method.end_task(net, t, task.train_X, task.train_y)
        task_seconds.append(time.perf_counter() - tic)
        steps_per_task.append(steps)

        for tau in range(1, t + 1):
            ev = stream.task(tau)
            X, y = (ev.val_X, ev.val_y) if eval_on == "val" else (ev.test_X, ev.test_y)
            matrix[t - 1, tau - 1] = evaluate_accuracy(net, X, y, tau)

    return RunResult(
        matrix=matrix,
        accuracy=accuracy_at(matrix, T),
        forgetting=forgetting_at(matrix, T) if T >= 2 else float("nan"),
        learning_accuracy=learning_accuracy_at(matrix, T),
        seed=seed,
        config=config_echo(cfg, seed),
        task_seconds=task_seconds,
        steps_per_task=steps_per_task,
        alpha=trace)


# -- multitask upper bound ---------------------------------------------------------

@dataclass
class MultitaskResult:
    """Joint-training reference: mean test accuracy with all data available."""

    per_task_accuracy: list
    accuracy: float
    seed: int
    config: dict
    seconds: float
    steps: int


def multitask_upper_bound(stream, cfg, seed, optimizer_name="sgd"):
    """Train one model on the union of all tasks' training data.

    Every batch may mix tasks; examples are routed to their own heads and
    the sub-gradients recombined by example count, which matches the
    gradient of the mean loss over the batch.
    """
    T = stream.num_tasks
    net = MultiHeadNet(stream.input_dim, cfg.hidden, stream.classes_per_task, T,
                       dropout=cfg.dropout, seed=(seed, _NET))
    opt = make_optimizer(optimizer_name, cfg.optim, net.num_params)
    dropout_rng = np.random.default_rng((seed, _DROPOUT))

    X = np.concatenate([task.train_X for task in stream.tasks])
    y = np.concatenate([task.train_y for task in stream.tasks])
    task_of = np.concatenate([np.full(len(task.train_y), t + 1)
                              for t, task in enumerate(stream.tasks)])
    n = len(y)
    tic = time.perf_counter()
    steps = 0
    for epoch in range(cfg.epochs_per_task):
        # the union shuffles like task 1, so a 1-task stream reproduces
        # sequential training step for step
        order = np.random.default_rng((seed, _SHUFFLE, 1, epoch)).permutation(n)
        for lo in range(0, n, cfg.batch_size):
            idx = order[lo:lo + cfg.batch_size]
            g = np.zeros(net.num_params)
            for t in np.unique(task_of[idx]):
                sub = idx[task_of[idx] == t]
                _, gt = loss_and_grad(net, TaskBatch(X[sub], int(t), y[sub]),
                                      train=True, rng=dropout_rng)
                g += (len(sub) / len(idx)) * gt
            net.set_flat(opt.step(net.theta, g))
            steps += 1
    seconds = time.perf_counter() - tic
    per_task = [evaluate_accuracy(net, task.test_X, task.test_y, t + 1)
                for t, task in enumerate(stream.tasks)]
    return MultitaskResult(per_task_accuracy=per_task,
                           accuracy=float(np.mean(per_task)),
                           seed=seed, config=config_echo(cfg, seed),
                           seconds=seconds, steps=steps)


# -- hyperparameter grid ------------------------------------------------------------

GRID_PARAMS = ("lr", "beta1", "beta2", "epsilon", "b",
               "dropout", "mem_per_class", "ewc_lambda", "lr_decay")


def apply_param(cfg, name, value):
    """RunConfig copy with one searchable hyperparameter replaced."""
    if name in ("lr", "beta1", "beta2", "epsilon", "b"):
        return replace(cfg, optim=replace(cfg.optim, **{name: float(value)}))
    if name == "dropout":
        return replace(cfg, dropout=float(value))
    if name == "mem_per_class":
        return replace(cfg, mem_per_class=int(value))
    if name == "ewc_lambda":
        return replace(cfg, ewc_lambda=float(value))
    if name == "lr_decay":
        return replace(cfg, lr_decay=float(value))
    raise ValueError(f"'{name}' is not a searchable parameter {GRID_PARAMS}")


@dataclass
class GridRow:
    index: int
    params: dict
    accuracy: float
    forgetting: float
    error: str = ""


def grid_search(stream, base_cfg, grid, seed, val_fraction=0.9):
    """Pick the grid combination with the best validation accuracy.

    Each combination trains on `val_fraction` of every task's training data
    and is scored by final average accuracy on the held-out remainder; ties
    fall to lower forgetting, then to grid order. Diverged combinations are
    recorded but never selected.
    """
    if not grid or any(len(v) == 0 for v in grid.values()):
        raise ValueError("grid must contain at least one value per dimension")
    names = list(grid)
    for name in names:
        if name not in GRID_PARAMS:
            raise ValueError(f"'{name}' is not a searchable parameter {GRID_PARAMS}")
    split = with_validation_split(stream, val_fraction, seed)
    rows = []
    for index, combo in enumerate(itertools.product(*(grid[n] for n in names))):
        params = dict(zip(names, combo))
        try:
            cfg = base_cfg
            for name, value in params.items():
                cfg = apply_param(cfg, name, value)
            res = run_stream(split, cfg, seed, eval_on="val")
            rows.append(GridRow(index, params, res.accuracy, res.forgetting))
        except (ValueError, RuntimeError) as exc:
            rows.append(GridRow(index, params, float("nan"), float("nan"),
                                error=str(exc)))
    viable = [r for r in rows if np.isfinite(r.accuracy)]
    if not viable:
        raise RuntimeError("every grid combination failed; see the row errors")

    def rank(row):
        forg = row.forgetting if np.isfinite(row.forgetting) else 0.0
        return (row.accuracy, -forg, -row.index)

    return max(viable, key=rank), rows


# -- result files --------------------------------------------------------------------

def fmt(x):
    """Full-precision float text that round-trips exactly."""
    return repr(float(x))


def write_matrix_csv(matrix, path, header_lines=()):
    """Accuracy matrix as rows (t, tau, accuracy) for the filled entries."""
    with open(path, "w") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        fh.write("t,tau,accuracy\n")
        T = matrix.shape[0]
        for t in range(1, T + 1):
            for tau in range(1, t + 1):
                if np.isfinite(matrix[t - 1, tau - 1]):
                    fh.write(f"{t},{tau},{fmt(matrix[t - 1, tau - 1])}\n")


def read_matrix_csv(path):
    """Inverse of write_matrix_csv."""
    entries = []
    for line in open(path):
        if line.startswith("#") or line.startswith("t,"):
            continue
        t, tau, a = line.strip().split(",")
        entries.append((int(t), int(tau), float(a)))
    T = max(t for t, _, _ in entries)
    matrix = np.full((T, T), np.nan)
    for t, tau, a in entries:
        matrix[t - 1, tau - 1] = a
    return matrix


def write_alpha_csv(trace, path, header_lines=()):
    """Step-averaged correlation weights with their per-t min/max band."""
    with open(path, "w") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        fh.write("t,tau,alpha_mean,alpha_min,alpha_max\n")
        for t, tau, mean, lo, hi in trace.rows():
            fh.write(f"{t},{tau},{fmt(mean)},{fmt(lo)},{fmt(hi)}\n")


def write_alpha_full_csv(trace, path, header_lines=()):
    """Raw per-step correlation weights (only present in 'full' mode)."""
    with open(path, "w") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        fh.write("t,tau,n,alpha\n")
        for t, tau, n, a in trace.full or ():
            fh.write(f"{t},{tau},{n},{fmt(a)}\n")


def write_summary(result, path, header_lines=()):
    """Key-value run summary; timings live here, never in the CSVs."""
    with open(path, "w") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        fh.write(f"seed: {result.seed}\n")
        fh.write(f"tasks: {result.matrix.shape[0]}\n")
        fh.write(f"final_accuracy: {fmt(result.accuracy)}\n")
        fh.write(f"forgetting: {fmt(result.forgetting)}\n")
        fh.write(f"learning_accuracy: {fmt(result.learning_accuracy)}\n")
        fh.write("steps_per_task: " + " ".join(str(s) for s in result.steps_per_task) + "\n")
        fh.write("task_seconds: " + " ".join(f"{s:.6f}" for s in result.task_seconds) + "\n")
        for key, value in result.config.items():
            fh.write(f"config.{key}: {value}\n")
