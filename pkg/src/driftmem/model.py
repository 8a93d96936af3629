"""One-hidden-layer regressor f(x) = g(h(x)), its hint-based losses, and
per-period training.

h is a tanh layer (k -> r), g a linear head (r -> m). The training loss is

    total = alpha * mean_MAE(z_stored, h(x))   over the memory set
          + beta  * mean_MAE(y, f(x))          over the memory set
          + xi    * mean_MAE(h_prev(x), h(x))  over the current batch
          + delta * mean_MAE(y, f(x))          over the current batch

with the previous period's parameters frozen for the whole period. All
gradients are analytic (reverse mode by hand); the MAE subgradient at an
exactly-zero residual is 0.
"""

import json
from dataclasses import dataclass, field, replace

import numpy as np


class TrainingDivergenceError(RuntimeError):
    """Training hit a non-finite loss or gradient."""

    def __init__(self, message, epoch=None, period=None):
        super().__init__(message)
        self.epoch = epoch
        self.period = period


def _freeze(arr):
    arr = np.array(arr, dtype=np.float64)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class RegressorParams:
    w_h: np.ndarray  # (r, k)
    b_h: np.ndarray  # (r,)
    w_g: np.ndarray  # (m, r)
    b_g: np.ndarray  # (m,)

    def __post_init__(self):
        for name in ("w_h", "b_h", "w_g", "b_g"):
            arr = _freeze(getattr(self, name))
            if not np.isfinite(arr).all():
                raise ValueError(f"{name} contains non-finite entries")
            object.__setattr__(self, name, arr)
        r, k = self.w_h.shape
        m = self.b_g.shape[0]
        if self.b_h.shape != (r,) or self.w_g.shape != (m, r):
            raise ValueError("parameter shapes are inconsistent")

    @property
    def dims(self):
        r, k = self.w_h.shape
        return k, r, self.b_g.shape[0]

    def flatten(self):
        return np.concatenate([self.w_h.ravel(), self.b_h, self.w_g.ravel(), self.b_g])

    @classmethod
    def unflatten(cls, vec, k, r, m):
        vec = np.asarray(vec, dtype=np.float64)
        i = 0
        w_h = vec[i : i + r * k].reshape(r, k); i += r * k
        b_h = vec[i : i + r]; i += r
        w_g = vec[i : i + m * r].reshape(m, r); i += m * r
        b_g = vec[i : i + m]
        return cls(w_h, b_h, w_g, b_g)


@dataclass(frozen=True)
class LossWeights:
    alpha: float = 1.0  # memory representation term
    beta: float = 1.0  # memory prediction term
    xi: float = 1.0  # hint term
    delta: float = 1.0  # current-data term

    def __post_init__(self):
        for name in ("alpha", "beta", "xi", "delta"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v >= 0):
                raise ValueError(f"loss weight {name} must be finite and >= 0")


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    epochs: int = 100
    batch_size: int = 64
    optimizer: str = "adam"  # "adam" or plain "gd"
    hidden_dim: int = 32
    loss_weights: LossWeights = field(default_factory=LossWeights)
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if self.epochs < 1 or self.batch_size < 1 or self.hidden_dim < 1:
            raise ValueError("epochs, batch_size and hidden_dim must be >= 1")
        if self.optimizer not in ("adam", "gd"):
            raise ValueError("optimizer must be 'adam' or 'gd'")


def init_params(k, r, m, seed):
    """Fan-in uniform init: each layer uniform(-1/sqrt(fan_in), 1/sqrt(fan_in))."""
    rng = np.random.default_rng(seed)
    lim_h = 1.0 / np.sqrt(k)
    lim_g = 1.0 / np.sqrt(r)
    return RegressorParams(
        rng.uniform(-lim_h, lim_h, (r, k)),
        rng.uniform(-lim_h, lim_h, r),
        rng.uniform(-lim_g, lim_g, (m, r)),
        rng.uniform(-lim_g, lim_g, m),
    )


def forward_batch(params, x):
    """Representations and predictions for an (n, k) batch."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    k, _, _ = params.dims
    if x.shape[1] != k:
        raise ValueError(f"inputs have dimension {x.shape[1]}, model expects {k}")
    z = np.tanh(x @ params.w_h.T + params.b_h)
    yhat = z @ params.w_g.T + params.b_g
    return z, yhat


def forward(params, x):
    """(z, yhat) for a single input vector."""
    z, yhat = forward_batch(params, np.asarray(x, dtype=np.float64)[None, :])
    return z[0], yhat[0]


@dataclass(frozen=True)
class LossTerms:
    total: float
    hint: float
    memory_repr: float
    memory_pred: float
    current: float


def _mae(pred, target, weights=None):
    err = np.abs(pred - target)
    if weights is None:
        return float(err.mean())
    w = np.asarray(weights, dtype=np.float64)
    return float((err.mean(axis=1) * w).sum() / w.sum())


def loss_terms(params, prev_params, memory, batch, w, current_weights=None):
    """All loss terms plus their weighted total.

    ``prev_params`` may be None (hint term is then 0) and ``memory`` may be
    empty (both memory terms 0). ``current_weights`` optionally weights the
    current-data MAE per sample; default is uniform.
    """
    hint = memory_repr = memory_pred = 0.0
    z_cur, yhat_cur = forward_batch(params, batch.x)
    current = _mae(yhat_cur, batch.y, current_weights)
    if prev_params is not None:
        z_prev, _ = forward_batch(prev_params, batch.x)
        hint = _mae(z_cur, z_prev)
    if memory is not None and memory.size > 0:
        z_mem, yhat_mem = forward_batch(params, memory.xs)
        memory_repr = _mae(z_mem, memory.zs)
        memory_pred = _mae(yhat_mem, memory.ys)
    total = w.alpha * memory_repr + w.beta * memory_pred + w.xi * hint + w.delta * current
    terms = LossTerms(total, hint, memory_repr, memory_pred, current)
    if not np.isfinite(total):
        raise TrainingDivergenceError(f"non-finite loss: {terms}")
    return terms


def _backprop_pred(params, x, z, yhat, target, scale, weights=None):
    """Gradient of scale * weighted-mean-MAE(target, yhat) w.r.t. params."""
    n, m = yhat.shape
    if weights is None:
        d_yhat = np.sign(yhat - target) * (scale / (n * m))
    else:
        w = np.asarray(weights, dtype=np.float64)
        d_yhat = np.sign(yhat - target) * (scale * w[:, None] / (w.sum() * m))
    d_wg = d_yhat.T @ z
    d_bg = d_yhat.sum(axis=0)
    d_z = d_yhat @ params.w_g
    d_pre = d_z * (1.0 - z * z)
    d_wh = d_pre.T @ x
    d_bh = d_pre.sum(axis=0)
    return d_wh, d_bh, d_wg, d_bg


def _backprop_repr(params, x, z, target, scale):
    """Gradient of scale * mean-MAE(target, z) w.r.t. params (head untouched)."""
    n, r = z.shape
    d_z = np.sign(z - target) * (scale / (n * r))
    d_pre = d_z * (1.0 - z * z)
    d_wh = d_pre.T @ x
    d_bh = d_pre.sum(axis=0)
    return d_wh, d_bh


def gradient(params, prev_params, memory, batch, w, current_weights=None):
    """Analytic gradient of the total loss, flattened in parameter order."""
    k, r, m = params.dims
    d_wh = np.zeros((r, k))
    d_bh = np.zeros(r)
    d_wg = np.zeros((m, r))
    d_bg = np.zeros(m)
    z_cur, yhat_cur = forward_batch(params, batch.x)
    if w.delta != 0.0:
        g = _backprop_pred(params, batch.x, z_cur, yhat_cur, batch.y, w.delta, current_weights)
        d_wh += g[0]; d_bh += g[1]; d_wg += g[2]; d_bg += g[3]
    if w.xi != 0.0 and prev_params is not None:
        z_prev, _ = forward_batch(prev_params, batch.x)
        g = _backprop_repr(params, batch.x, z_cur, z_prev, w.xi)
        d_wh += g[0]; d_bh += g[1]
    if memory is not None and memory.size > 0:
        z_mem, yhat_mem = forward_batch(params, memory.xs)
        if w.alpha != 0.0:
            g = _backprop_repr(params, memory.xs, z_mem, memory.zs, w.alpha)
            d_wh += g[0]; d_bh += g[1]
        if w.beta != 0.0:
            g = _backprop_pred(params, memory.xs, z_mem, yhat_mem, memory.ys, w.beta)
            d_wh += g[0]; d_bh += g[1]; d_wg += g[2]; d_bg += g[3]
    grad = np.concatenate([d_wh.ravel(), d_bh, d_wg.ravel(), d_bg])
    if not np.isfinite(grad).all():
        raise TrainingDivergenceError("non-finite gradient")
    return grad


def train_period(prev_params, memory, dataset, config):
    """Train for one period; returns (new params, per-epoch total-loss trace).

    Parameters start from ``prev_params`` when given, else from a seeded
    fan-in init. ``prev_params`` stays frozen: it serves as the hint teacher
    for the entire period. The memory set joins every step as a full batch.
    """
    if dataset.size < 1:
        raise ValueError("empty training dataset")
    k = dataset.input_dim
    m = dataset.target_dim
    w = config.loss_weights
    rng = np.random.default_rng(config.seed)
    if prev_params is None:
        params = init_params(k, config.hidden_dim, m, rng.integers(2**32))
    else:
        params = prev_params
    _, r, _ = params.dims
    theta = params.flatten()
    adam_m = np.zeros_like(theta)
    adam_v = np.zeros_like(theta)
    step = 0
    trace = []
    for epoch in range(config.epochs):
        order = rng.permutation(dataset.size)
        try:
            for lo in range(0, dataset.size, config.batch_size):
                idx = order[lo : lo + config.batch_size]
                mb = PeriodBatch(dataset.x[idx], dataset.y[idx])
                grad = gradient(params, prev_params, memory, mb, w)
                if config.optimizer == "adam":
                    step += 1
                    adam_m = 0.9 * adam_m + 0.1 * grad
                    adam_v = 0.999 * adam_v + 0.001 * grad * grad
                    m_hat = adam_m / (1.0 - 0.9**step)
                    v_hat = adam_v / (1.0 - 0.999**step)
                    theta = theta - config.learning_rate * m_hat / (np.sqrt(v_hat) + 1e-8)
                else:
                    theta = theta - config.learning_rate * grad
                params = RegressorParams.unflatten(theta, k, r, m)
            epoch_loss = loss_terms(params, prev_params, memory, dataset, w).total
        except TrainingDivergenceError as err:
            raise TrainingDivergenceError(
                f"diverged at epoch {epoch}: {err}", epoch=epoch
            ) from None
        trace.append(epoch_loss)
    return params, trace


@dataclass(frozen=True)
class PeriodBatch:
    """Minimal (x, y) view used for minibatches inside the train loop."""

    x: np.ndarray
    y: np.ndarray

    @property
    def size(self):
        return len(self.x)


def save_checkpoint(params, path):
    """Write parameters as JSON; the decimal serialization round-trips
    bit-exactly (shortest-repr floats, <= 17 significant digits)."""
    k, r, m = params.dims
    doc = {
        "k": k,
        "r": r,
        "m": m,
        "w_h": params.w_h.ravel().tolist(),
        "b_h": params.b_h.tolist(),
        "w_g": params.w_g.ravel().tolist(),
        "b_g": params.b_g.tolist(),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True)


def load_checkpoint(path):
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    k, r, m = doc["k"], doc["r"], doc["m"]
    return RegressorParams(
        np.array(doc["w_h"]).reshape(r, k),
        np.array(doc["b_h"]),
        np.array(doc["w_g"]).reshape(m, r),
        np.array(doc["b_g"]),
    )
