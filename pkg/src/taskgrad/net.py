"""Dense multi-head classifier with exact manual backpropagation.

The model is a shared ReLU trunk plus one linear classifier head per task.
All weights live in a single flat float64 vector; the per-layer matrices are
views into it, so optimizers can treat the whole model as a point in R^P and
per-task gradient bookkeeping stays a plain vector operation.
"""

import numpy as np
from dataclasses import dataclass


@dataclass
class TaskBatch:
    """One mini-batch belonging to a single task.

    X: (batch, input_dim) features, T: 1-based task id, y: labels in
    [0, classes_per_task) valid for head T.
    """

    X: np.ndarray
    task_id: int
    y: np.ndarray

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.int64)
        if self.X.ndim != 2:
            raise ValueError(f"batch features must be 2-D, got shape {self.X.shape}")
        if self.y.ndim != 1 or len(self.y) != len(self.X):
            raise ValueError(
                f"labels shape {self.y.shape} does not match {len(self.X)} examples"
            )

    def __len__(self):
        return len(self.y)


def relu(z):
    return np.maximum(z, 0.0)


class MultiHeadNet:
    """MLP trunk shared across tasks, one linear output head per task.

    Heads are pre-allocated for all `num_tasks` tasks. Dropout (inverted, so
    the eval path needs no rescaling) is applied to trunk activations only,
    never to head outputs.
    """

    def __init__(self, input_dim, hidden_dims, classes_per_task, num_tasks,
                 dropout=0.0, seed=0):
        if input_dim < 1 or classes_per_task < 1 or num_tasks < 1:
            raise ValueError("input_dim, classes_per_task and num_tasks must be >= 1")
        if not 0.0 <= dropout < 1.0:
            raise ValueError(f"dropout must be in [0, 1), got {dropout}")
        hidden_dims = tuple(int(h) for h in hidden_dims)
        if any(h < 1 for h in hidden_dims):
            raise ValueError(f"hidden dims must be positive, got {hidden_dims}")

        self.input_dim = int(input_dim)
        self.hidden_dims = hidden_dims
        self.classes_per_task = int(classes_per_task)
        self.num_tasks = int(num_tasks)
        self.dropout = float(dropout)

        trunk_dims = (self.input_dim,) + hidden_dims
        last = trunk_dims[-1]
        shapes = []
        for fan_in, fan_out in zip(trunk_dims[:-1], trunk_dims[1:]):
            shapes.append((fan_in, fan_out))
        for _ in range(self.num_tasks):
            shapes.append((last, self.classes_per_task))

        self._slices = []
        offset = 0
        for fan_in, fan_out in shapes:
            w_size, b_size = fan_in * fan_out, fan_out
            self._slices.append((slice(offset, offset + w_size), (fan_in, fan_out),
                                 slice(offset + w_size, offset + w_size + b_size)))
            offset += w_size + b_size
        self.num_params = offset

        self.theta = np.zeros(self.num_params, dtype=np.float64)
        rng = np.random.default_rng(seed)
        for (w_sl, shape, _), _dims in zip(self._slices, shapes):
            fan_in, fan_out = shape
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            self.theta[w_sl] = rng.uniform(-limit, limit, size=fan_in * fan_out)

        self._n_trunk = len(hidden_dims)

    # -- parameter access ---------------------------------------------------

    def layer_params(self, i):
        """Views (W, b) of trunk layer i; writing into them mutates theta."""
        w_sl, shape, b_sl = self._slices[i]
        return self.theta[w_sl].reshape(shape), self.theta[b_sl]

    def head_params(self, task_id):
        """Views (W, b) of the classifier head for 1-based task_id."""
        self._check_task(task_id)
        w_sl, shape, b_sl = self._slices[self._n_trunk + task_id - 1]
        return self.theta[w_sl].reshape(shape), self.theta[b_sl]

    def head_index_range(self, task_id):
        """(start, stop) of head task_id's entries inside the flat vector."""
        self._check_task(task_id)
        w_sl, _, b_sl = self._slices[self._n_trunk + task_id - 1]
        return w_sl.start, b_sl.stop

    def get_flat(self):
        """Copy of the flat parameter vector."""
        return self.theta.copy()

    def set_flat(self, values):
        values = np.asarray(values, dtype=np.float64)
        if values.shape != (self.num_params,):
            raise ValueError(
                f"expected {self.num_params} parameters, got shape {values.shape}")
        if not np.isfinite(values).all():
            raise ValueError("parameter vector contains NaN or Inf")
        self.theta[:] = values

    # -- forward / backward -------------------------------------------------

    def _check_task(self, task_id):
        if not 1 <= task_id <= self.num_tasks:
            raise KeyError(
                f"no head for task {task_id}; allocated tasks are 1..{self.num_tasks}")

    def _check_input(self, X):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.input_dim:
            raise ValueError(
                f"expected features of shape (batch, {self.input_dim}), got {X.shape}")
        return X

    def _forward_cached(self, X, task_id, train, rng):
        """Forward pass keeping pre-activations and dropout masks for backprop."""
        acts = [X]          # a_0 .. a_L (post-activation, post-dropout)
        pre = []            # z_1 .. z_L
        masks = []
        use_dropout = train and self.dropout > 0.0
        if use_dropout and rng is None:
            rng = np.random.default_rng()
        h = X
        for i in range(self._n_trunk):
            W, b = self.layer_params(i)
            z = h @ W + b
            h = relu(z)
            if use_dropout:
                mask = (rng.random(h.shape) >= self.dropout) / (1.0 - self.dropout)
                h = h * mask
            else:
                mask = None
            pre.append(z)
            masks.append(mask)
            acts.append(h)
        Wh, bh = self.head_params(task_id)
        logits = h @ Wh + bh
        return logits, acts, pre, masks

    def forward(self, X, task_id, train=False, rng=None):
        """Logits of head task_id for feature matrix X.

        Dropout fires only when train is set and the net has dropout > 0;
        masks are drawn from rng (fresh generator if omitted).
        """
        self._check_task(task_id)
        X = self._check_input(X)
        logits, _, _, _ = self._forward_cached(X, task_id, train, rng)
        return logits

    def predict(self, X, task_id):
        """Top-1 class within head task_id."""
        return np.argmax(self.forward(X, task_id), axis=1)


def _softmax_ce(logits, y):
    """Mean cross-entropy and softmax probabilities, numerically stable."""
    z = logits - logits.max(axis=1, keepdims=True)
    ez = np.exp(z)
    sums = ez.sum(axis=1)
    losses = np.log(sums) - z[np.arange(len(y)), y]
    return losses.mean(), ez / sums[:, None]


def loss(net, batch, train=False, rng=None):
    """Mean softmax cross-entropy of `batch` under its task's head."""
    net._check_task(batch.task_id)
    X = net._check_input(batch.X)
    if len(batch) == 0:
        raise ValueError("cannot compute loss of an empty batch")
    if batch.y.min() < 0 or batch.y.max() >= net.classes_per_task:
        raise ValueError(
            f"labels must lie in [0, {net.classes_per_task}), got range "
            f"[{batch.y.min()}, {batch.y.max()}]")
    logits, _, _, _ = net._forward_cached(X, batch.task_id, train, rng)
    value, _ = _softmax_ce(logits, batch.y)
    return value


def loss_and_grad(net, batch, train=False, rng=None):
    """Loss plus its exact gradient w.r.t. the flat parameter vector.

    The gradient is exact for the dropout masks realized during this call.
    Entries belonging to heads other than the batch's task are zero.
    """
    net._check_task(batch.task_id)
    X = net._check_input(batch.X)
    B = len(batch)
    if B == 0:
        raise ValueError("cannot compute gradients of an empty batch")
    if batch.y.min() < 0 or batch.y.max() >= net.classes_per_task:
        raise ValueError(
            f"labels must lie in [0, {net.classes_per_task}), got range "
            f"[{batch.y.min()}, {batch.y.max()}]")

    logits, acts, pre, masks = net._forward_cached(X, batch.task_id, train, rng)
    value, probs = _softmax_ce(logits, batch.y)

    grad = np.zeros(net.num_params, dtype=np.float64)

    dlogits = probs.copy()
    dlogits[np.arange(B), batch.y] -= 1.0
    dlogits /= B

    w_sl, shape, b_sl = net._slices[net._n_trunk + batch.task_id - 1]
    grad[w_sl] = (acts[-1].T @ dlogits).ravel()
    grad[b_sl] = dlogits.sum(axis=0)
    Wh, _ = net.head_params(batch.task_id)
    dh = dlogits @ Wh.T

    for i in range(net._n_trunk - 1, -1, -1):
        if masks[i] is not None:
            dh = dh * masks[i]
        dz = dh * (pre[i] > 0)
        w_sl, shape, b_sl = net._slices[i]
        grad[w_sl] = (acts[i].T @ dz).ravel()
        grad[b_sl] = dz.sum(axis=0)
        if i > 0:
            W, _ = net.layer_params(i)
            dh = dz @ W.T
    return value, grad


def central_difference(f, x, h):
    """Central finite-difference gradient of scalar f at x: (f(x+h e_i) - f(x-h e_i)) / 2h."""
    if h <= 0:
        raise ValueError(f"finite-difference step must be positive, got {h}")
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    for i in range(len(x)):
        xp = x.copy()
        xp[i] += h
        xm = x.copy()
        xm[i] -= h
        grad[i] = (f(xp) - f(xm)) / (2.0 * h)
    return grad


def finite_diff_grad(net, batch, h=1e-5):
    """Central-difference estimate of the batch loss gradient.

    Runs with dropout disabled so the loss is deterministic; use it as the
    independent check on loss_and_grad.
    """
    theta0 = net.get_flat()

    def eval_loss(theta):
        net.theta[:] = theta
        return loss(net, batch, train=False)

    try:
        return central_difference(eval_loss, theta0, h)
    finally:
        net.theta[:] = theta0
