"""Multi-head MLP classifier with manual backprop over a flat vector.

The network is a shared ReLU trunk plus one linear head per task; the
task id selects the head at both training and evaluation time. All
parameters live in a single flat float64 vector so the update rules can
treat gradients as plain dense vectors. Operations are pure: they return
new states and never mutate their inputs.

Flat layout: trunk layers in order (weights then bias each), then heads
in order (weights then bias each).
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import EmptyBatch, EmptyDataset, ShapeMismatch, UnknownTask


@dataclass(frozen=True)
class MlpArchitecture:
    input_dim: int
    hidden_dims: tuple[int, ...]
    heads: int
    classes_per_head: int

    def __post_init__(self):
        object.__setattr__(self, "hidden_dims", tuple(int(d) for d in self.hidden_dims))
        dims = (self.input_dim, *self.hidden_dims, self.heads, self.classes_per_head)
        if any(d < 1 for d in dims):
            raise ValueError(f"all architecture dims must be >= 1, got {self}")

    def trunk_shapes(self) -> list[tuple[int, int]]:
        dims = [self.input_dim, *self.hidden_dims]
        return list(zip(dims[:-1], dims[1:]))

    def head_shape(self) -> tuple[int, int]:
        last = self.hidden_dims[-1] if self.hidden_dims else self.input_dim
        return (last, self.classes_per_head)

    def param_count(self) -> int:
        trunk = sum((fan_in + 1) * fan_out for fan_in, fan_out in self.trunk_shapes())
        fan_in, fan_out = self.head_shape()
        return trunk + self.heads * (fan_in + 1) * fan_out


@dataclass
class ModelState:
    theta: np.ndarray
    arch: MlpArchitecture
    rng_seed: int


def _views(theta: np.ndarray, arch: MlpArchitecture):
    """Slice theta into (trunk [(W, b)...], heads [(W, b)...]) without copying."""
    trunk, heads = [], []
    offset = 0

    def take(fan_in, fan_out):
        nonlocal offset
        w = theta[offset : offset + fan_in * fan_out].reshape(fan_in, fan_out)
        offset += fan_in * fan_out
        b = theta[offset : offset + fan_out]
        offset += fan_out
        return w, b

    for fan_in, fan_out in arch.trunk_shapes():
        trunk.append(take(fan_in, fan_out))
    fan_in, fan_out = arch.head_shape()
    for _ in range(arch.heads):
        heads.append(take(fan_in, fan_out))
    return trunk, heads


def init_model(arch: MlpArchitecture, seed: int) -> ModelState:
    """Fan-balanced uniform weights, zero biases, reproducible per seed."""
    rng = np.random.default_rng(seed)
    theta = np.zeros(arch.param_count())
    trunk, heads = _views(theta, arch)
    for w, _ in [*trunk, *heads]:
        fan_in, fan_out = w.shape
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        w[...] = rng.uniform(-bound, bound, size=w.shape)
    return ModelState(theta, arch, seed)


def _check_task(arch: MlpArchitecture, task_id: int) -> int:
    task_id = int(task_id)
    if not 1 <= task_id <= arch.heads:
        raise UnknownTask(f"task {task_id} outside 1..{arch.heads}")
    return task_id


def _trunk_forward(trunk, xs):
    """Returns (final hidden activations, list of pre-activations)."""
    h = xs
    pres = []
    for w, b in trunk:
        pre = h @ w + b
        pres.append(pre)
        h = np.maximum(0.0, pre)
    return h, pres


def forward(model: ModelState, x, task_id: int) -> np.ndarray:
    """Logits of the given task's head; accepts one vector or a batch."""
    task_id = _check_task(model.arch, task_id)
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    xs = x[None, :] if single else x
    trunk, heads = _views(model.theta, model.arch)
    h, _ = _trunk_forward(trunk, xs)
    w, b = heads[task_id - 1]
    logits = h @ w + b
    return logits[0] if single else logits


def _log_softmax(logits):
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def loss_and_grad(model: ModelState, xs, task_ids, labels) -> tuple[float, np.ndarray]:
    """Mean cross-entropy over a (possibly mixed-task) batch and its exact gradient.

    Heads that receive no samples get an exactly-zero gradient block.
    """
    xs = np.asarray(xs, dtype=np.float64)
    task_ids = np.atleast_1d(np.asarray(task_ids, dtype=np.int64))
    labels = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    if xs.size == 0:
        raise EmptyBatch("loss over an empty batch")
    if xs.ndim == 1:
        xs = xs[None, :]
    n = xs.shape[0]
    for t in np.unique(task_ids):
        _check_task(model.arch, t)

    arch = model.arch
    trunk, heads = _views(model.theta, arch)
    h, pres = _trunk_forward(trunk, xs)

    grad = np.zeros_like(model.theta)
    grad_trunk, grad_heads = _views(grad, arch)

    loss = 0.0
    dh = np.zeros_like(h)
    for t in np.unique(task_ids):
        rows = np.flatnonzero(task_ids == t)
        w, b = heads[t - 1]
        logits = h[rows] @ w + b
        logp = _log_softmax(logits)
        loss -= logp[np.arange(len(rows)), labels[rows]].sum()
        dlogits = np.exp(logp)
        dlogits[np.arange(len(rows)), labels[rows]] -= 1.0
        dlogits /= n
        gw, gb = grad_heads[t - 1]
        gw[...] = h[rows].T @ dlogits
        gb[...] = dlogits.sum(axis=0)
        dh[rows] += dlogits @ w.T
    loss /= n

    for layer in range(len(trunk) - 1, -1, -1):
        w, _ = trunk[layer]
        da = dh * (pres[layer] > 0.0)
        below = xs if layer == 0 else np.maximum(0.0, pres[layer - 1])
        gw, gb = grad_trunk[layer]
        gw[...] = below.T @ da
        gb[...] = da.sum(axis=0)
        dh = da @ w.T
    return float(loss), grad


def sgd_step(model: ModelState, update: np.ndarray, lr: float) -> ModelState:
    """theta' = theta - lr * update, as a new state."""
    update = np.asarray(update, dtype=np.float64)
    if update.shape != model.theta.shape:
        raise ShapeMismatch(
            f"update length {update.shape} != parameter length {model.theta.shape}"
        )
    if lr <= 0:
        raise ValueError(f"learning rate must be positive, got {lr}")
    return replace(model, theta=model.theta - lr * update)


def evaluate(model: ModelState, xs, labels, task_id: int) -> float:
    """Fraction of argmax-correct predictions; ties go to the lowest class index."""
    xs = np.asarray(xs, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if len(xs) == 0:
        raise EmptyDataset("evaluation over an empty dataset")
    logits = forward(model, xs, task_id)
    return float(np.mean(np.argmax(logits, axis=1) == labels))
