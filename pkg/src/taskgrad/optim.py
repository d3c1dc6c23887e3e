"""Adaptive optimizers and their task-aware counterparts.

The task-aware ("tag") variants keep one frozen moment pair per finished
task in a KnowledgeBase. At every step the current first moment is compared
against each past task's frozen first moment; the resulting exponential
correlation weights rescale the per-task second moments before they enter
the usual adaptive denominator. Anti-correlated history inflates the
denominator (smaller steps, less interference), correlated history shrinks
it (larger steps, more transfer).
"""

import csv

import numpy as np
from dataclasses import dataclass

NORM_FLOOR = 1e-12


@dataclass
class OptimConfig:
    """Shared optimizer hyperparameters.

    lr: learning rate; beta1/beta2: first/second moment decay; epsilon:
    denominator stabilizer (inside the square root); b: correlation strength
    of the task-aware variants.
    """

    lr: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.99
    epsilon: float = 1e-8
    b: float = 5.0

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError(f"lr must be > 0, got {self.lr}")
        if not 0.0 <= self.beta1 < 1.0:
            raise ValueError(f"beta1 must be in [0, 1), got {self.beta1}")
        if not 0.0 <= self.beta2 < 1.0:
            raise ValueError(f"beta2 must be in [0, 1), got {self.beta2}")
        if self.epsilon <= 0:
            raise ValueError(f"epsilon must be > 0, got {self.epsilon}")
        if self.b < 0:
            raise ValueError(f"b must be >= 0, got {self.b}")


def _check_shapes(theta, g):
    if theta.shape != g.shape:
        raise ValueError(f"parameter shape {theta.shape} != gradient shape {g.shape}")


def _ema(prev, beta, x):
    # Shared by naive and task-aware paths so single-task trajectories agree bitwise.
    return beta * prev + (1.0 - beta) * x


def _scaled_step(theta, g, lr, denom_sq, eps):
    return theta - lr * g / np.sqrt(denom_sq + eps)


def sgd_step(theta, g, lr):
    """Plain gradient step theta - lr * g."""
    theta = np.asarray(theta, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    _check_shapes(theta, g)
    return theta - lr * g


class SGD:
    """Task-agnostic stochastic gradient descent."""

    def __init__(self, lr):
        self.lr = float(lr)

    def step(self, theta, g):
        return sgd_step(theta, g, self.lr)

    def start_task(self, task_id):
        pass

    def end_task(self):
        pass


class Adagrad:
    """Adagrad with the squared-gradient sum accumulated over the whole stream."""

    def __init__(self, cfg, dim):
        self.cfg = cfg
        self.V = np.zeros(dim, dtype=np.float64)

    def step(self, theta, g):
        _check_shapes(theta, g)
        self.V = self.V + g * g
        return _scaled_step(theta, g, self.cfg.lr, self.V, self.cfg.epsilon)

    def start_task(self, task_id):
        pass

    def end_task(self):
        pass


class RMSProp:
    """RMSProp; the second moment persists across task boundaries."""

    def __init__(self, cfg, dim):
        self.cfg = cfg
        self.V = np.zeros(dim, dtype=np.float64)

    def step(self, theta, g):
        _check_shapes(theta, g)
        self.V = _ema(self.V, self.cfg.beta2, g * g)
        return _scaled_step(theta, g, self.cfg.lr, self.V, self.cfg.epsilon)

    def start_task(self, task_id):
        pass

    def end_task(self):
        pass


def _adam_scale(lr, beta1, beta2, n):
    return lr * np.sqrt(1.0 - beta2 ** n) / (1.0 - beta1 ** n)


class Adam:
    """Adam with a global step counter; epsilon sits inside the square root."""

    def __init__(self, cfg, dim):
        self.cfg = cfg
        self.m = np.zeros(dim, dtype=np.float64)
        self.v = np.zeros(dim, dtype=np.float64)
        self.n = 0

    def step(self, theta, g):
        _check_shapes(theta, g)
        self.n += 1
        self.m = _ema(self.m, self.cfg.beta1, g)
        self.v = _ema(self.v, self.cfg.beta2, g * g)
        scale = _adam_scale(self.cfg.lr, self.cfg.beta1, self.cfg.beta2, self.n)
        return theta - scale * self.m / np.sqrt(self.v + self.cfg.epsilon)

    def start_task(self, task_id):
        pass

    def end_task(self):
        pass


class KnowledgeBase:
    """Per-task gradient moments: frozen pairs for past tasks, running pair for the current one.

    The second moment is an exponential average by default; with
    cumulative=True it is a plain sum (the Adagrad flavor). Frozen entries
    are write-protected and never change once a task is committed, so
    storage grows linearly with the number of tasks.
    """

    def __init__(self, dim, beta1=0.9, beta2=0.99, cumulative=False):
        self.dim = int(dim)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.cumulative = bool(cumulative)
        self.frozen = []                    # [(M, V)] for tasks 1 .. task_t - 1
        self.current_M = np.zeros(self.dim, dtype=np.float64)
        self.current_V = np.zeros(self.dim, dtype=np.float64)
        self.step_n = 0
        self.task_t = 1

    def update(self, g):
        """Advance the running moments by one gradient."""
        g = np.asarray(g, dtype=np.float64)
        if g.shape != (self.dim,):
            raise ValueError(f"gradient shape {g.shape} != ({self.dim},)")
        self.current_M = _ema(self.current_M, self.beta1, g)
        if self.cumulative:
            self.current_V = self.current_V + g * g
        else:
            self.current_V = _ema(self.current_V, self.beta2, g * g)
        self.step_n += 1

    def commit_task(self):
        """Freeze the running moments as the finished task's entry and reset."""
        if self.step_n == 0:
            raise RuntimeError(
                f"cannot commit task {self.task_t}: no gradient updates recorded")
        M = self.current_M.copy()
        V = self.current_V.copy()
        M.flags.writeable = False
        V.flags.writeable = False
        self.frozen.append((M, V))
        self.current_M = np.zeros(self.dim, dtype=np.float64)
        self.current_V = np.zeros(self.dim, dtype=np.float64)
        self.step_n = 0
        self.task_t += 1


def tag_alpha(m_cur, m_prev, b):
    """Correlation weight exp(-b * cosine(m_cur, m_prev)).

    Bounded in [exp(-b), exp(b)] and invariant to positive rescaling of
    either vector. When either norm is below NORM_FLOOR there is no
    direction to compare, so the weight degenerates to 1 (cosine 0).
    """
    m_cur = np.asarray(m_cur, dtype=np.float64)
    m_prev = np.asarray(m_prev, dtype=np.float64)
    n_cur = np.linalg.norm(m_cur)
    n_prev = np.linalg.norm(m_prev)
    if n_cur < NORM_FLOOR or n_prev < NORM_FLOOR:
        return 1.0
    cosine = float(np.dot(m_cur, m_prev)) / (float(n_cur) * float(n_prev))
    return float(np.exp(-b * cosine))


def tag_alphas(kb, b):
    """Weights [alpha(t,1), ..., alpha(t,t-1), alpha(t,t)] for the current task.

    The self weight alpha(t,t) compares the running first moment with
    itself, which pins it at exp(-b) whenever the moment is nonzero.
    """
    weights = [tag_alpha(kb.current_M, M_prev, b) for M_prev, _ in kb.frozen]
    weights.append(tag_alpha(kb.current_M, kb.current_M, b))
    return np.asarray(weights, dtype=np.float64)


def weighted_second_moment(alphas, past_Vs, current_V):
    """alpha-weighted combination: alphas[-1]*current_V + sum_i alphas[i]*past_Vs[i]."""
    if len(alphas) != len(past_Vs) + 1:
        raise ValueError(
            f"need {len(past_Vs) + 1} weights for {len(past_Vs)} past tasks, "
            f"got {len(alphas)}")
    out = alphas[-1] * current_V
    for a, V in zip(alphas[:-1], past_Vs):
        out = out + a * V
    return out


def tag_weighted_second_moment(kb, b):
    """Denominator moment for the task-aware update.

    For the first task this is the running second moment itself; afterwards
    every stored task contributes its frozen moment scaled by its
    correlation weight.
    """
    if kb.task_t == 1:
        return kb.current_V
    alphas = tag_alphas(kb, b)
    return weighted_second_moment(alphas, [V for _, V in kb.frozen], kb.current_V)


class _TagBase:
    """Shared knowledge-base plumbing of the task-aware optimizers."""

    cumulative = False

    def __init__(self, cfg, dim):
        self.cfg = cfg
        self.kb = KnowledgeBase(dim, beta1=cfg.beta1, beta2=cfg.beta2,
                                cumulative=self.cumulative)
        self.last_alphas = None

    def step(self, theta, g):
        _check_shapes(theta, g)
        self.kb.update(g)
        self.last_alphas = tag_alphas(self.kb, self.cfg.b)
        if self.kb.task_t == 1:
            wv = self.kb.current_V
        else:
            wv = weighted_second_moment(
                self.last_alphas, [V for _, V in self.kb.frozen], self.kb.current_V)
        return self._apply(theta, g, wv)

    def start_task(self, task_id):
        pass

    def end_task(self):
        self.kb.commit_task()


class TagRMSProp(_TagBase):
    """RMSProp whose denominator blends correlation-weighted per-task moments."""

    def _apply(self, theta, g, wv):
        return _scaled_step(theta, g, self.cfg.lr, wv, self.cfg.epsilon)


class TagAdagrad(_TagBase):
    """Adagrad flavor: per-task cumulative second moments, same weighting."""

    cumulative = True

    def _apply(self, theta, g, wv):
        return _scaled_step(theta, g, self.cfg.lr, wv, self.cfg.epsilon)


class TagAdam(_TagBase):
    """Adam flavor: bias-corrected first moment over the weighted denominator.

    The bias-correction exponent is the within-task step count, which resets
    at every task boundary together with the moments.
    """

    def _apply(self, theta, g, wv):
        scale = _adam_scale(self.cfg.lr, self.cfg.beta1, self.cfg.beta2, self.kb.step_n)
        return theta - scale * self.kb.current_M / np.sqrt(wv + self.cfg.epsilon)


OPTIMIZER_NAMES = ("sgd", "adagrad", "rmsprop", "adam",
                   "tag-adagrad", "tag-rmsprop", "tag-adam")


def make_optimizer(name, cfg, dim):
    """Optimizer instance for one of OPTIMIZER_NAMES."""
    if name == "sgd":
        return SGD(cfg.lr)
    if name == "adagrad":
        return Adagrad(cfg, dim)
    if name == "rmsprop":
        return RMSProp(cfg, dim)
    if name == "adam":
        return Adam(cfg, dim)
    if name == "tag-adagrad":
        return TagAdagrad(cfg, dim)
    if name == "tag-rmsprop":
        return TagRMSProp(cfg, dim)
    if name == "tag-adam":
        return TagAdam(cfg, dim)
    raise ValueError(f"unknown optimizer '{name}'; expected one of {OPTIMIZER_NAMES}")


def save_knowledge_base(kb, path):
    """Dump a knowledge base to CSV: one meta row, then M/V rows per task.

    The running (uncommitted) moments are stored under the current task id,
    so a snapshot taken mid-task restores exactly.
    """
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["meta", kb.task_t, kb.step_n, repr(kb.beta1), repr(kb.beta2),
                    int(kb.cumulative), kb.dim])
        for tau, (M, V) in enumerate(kb.frozen, start=1):
            w.writerow(["M", tau] + [repr(float(x)) for x in M])
            w.writerow(["V", tau] + [repr(float(x)) for x in V])
        w.writerow(["M", kb.task_t] + [repr(float(x)) for x in kb.current_M])
        w.writerow(["V", kb.task_t] + [repr(float(x)) for x in kb.current_V])


def load_knowledge_base(path):
    """Rebuild a knowledge base saved by save_knowledge_base."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][0] != "meta":
        raise ValueError(f"{path}: not a knowledge-base dump (missing meta row)")
    _, task_t, step_n, beta1, beta2, cumulative, dim = rows[0]
    kb = KnowledgeBase(int(dim), beta1=float(beta1), beta2=float(beta2),
                       cumulative=bool(int(cumulative)))
    moments = {}
    for row in rows[1:]:
        kind, tau = row[0], int(row[1])
        vec = np.array([float(x) for x in row[2:]], dtype=np.float64)
        if vec.shape != (kb.dim,):
            raise ValueError(f"{path}: row for task {tau} has {len(vec)} values, "
                             f"expected {kb.dim}")
        moments.setdefault(tau, {})[kind] = vec
    for tau in range(1, int(task_t)):
        M, V = moments[tau]["M"], moments[tau]["V"]
        M.flags.writeable = False
        V.flags.writeable = False
        kb.frozen.append((M, V))
    kb.current_M = moments[int(task_t)]["M"]
    kb.current_V = moments[int(task_t)]["V"]
    kb.task_t = int(task_t)
    kb.step_n = int(step_n)
    return kb
