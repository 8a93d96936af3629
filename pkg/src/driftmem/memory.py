"""Replay memory: density-mixed sample weights and weighted selection.

Each period the memory is rebuilt from the pool ``old memory ++ current
period``. A sample's weight blends its density score q(x) with a
reservoir-style biased coefficient, controlled by the shift level gamma:

    memory sample:   w = (1 - gamma) * q(x) + gamma * A / (A + N)
    current sample:  w = (1 - gamma) * q(x) + gamma * M / (A + N)

where A counts all samples seen in prior periods, N the current period
size and M the memory budget. At gamma = 1 this is exactly the biased
reservoir weighting that samples every point seen so far with equal
probability; at gamma = 0 it is pure density weighting.
"""

import json
from dataclasses import dataclass

import numpy as np

from .data import PeriodDataset
from .density import densities, density_score, fit_density, shift_level_score

WEIGHT_FLOOR = 1e-12


def _freeze(arr):
    arr = np.array(arr, dtype=np.float64)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class MemoryEntry:
    x: np.ndarray  # (k,)
    z: np.ndarray  # (r,) stored hint representation
    y: np.ndarray  # (m,)


@dataclass(frozen=True)
class MemorySet:
    """Fixed-budget replay store of (x, z, y) triples.

    ``cumulative`` is the total number of stream samples seen in prior
    periods (the A in the biased coefficients).
    """

    xs: np.ndarray  # (n, k)
    zs: np.ndarray  # (n, r)
    ys: np.ndarray  # (n, m)
    budget: int
    cumulative: int = 0

    def __post_init__(self):
        for name in ("xs", "zs", "ys"):
            object.__setattr__(self, name, _freeze(getattr(self, name)))
        if self.budget < 1:
            raise ValueError("memory budget must be >= 1")
        if not (len(self.xs) == len(self.zs) == len(self.ys)):
            raise ValueError("memory arrays disagree on length")
        if len(self.xs) > self.budget:
            raise ValueError("memory holds more entries than its budget")
        if self.cumulative < 0:
            raise ValueError("cumulative count must be >= 0")

    @classmethod
    def empty(cls, budget):
        return cls(np.zeros((0, 0)), np.zeros((0, 0)), np.zeros((0, 0)), budget)

    @property
    def size(self):
        return len(self.xs)

    @property
    def entries(self):
        return [MemoryEntry(self.xs[i], self.zs[i], self.ys[i]) for i in range(self.size)]


@dataclass(frozen=True)
class WeightSet:
    """Positive sampling weights aligned with the pool memory ++ current."""

    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if not np.isfinite(w).all():
            raise ValueError("weights must be finite")
        w = np.maximum(w, WEIGHT_FLOOR)
        object.__setattr__(self, "weights", _freeze(w))

    def __len__(self):
        return len(self.weights)


def sample_weight(memory, dataset, q, gamma):
    """Mix density scores with biased coefficients into sampling weights.

    ``q`` maps an (n, k) array of inputs to (n,) density scores. The output
    order is memory entries first, then the current period's samples.
    """
    if not 0.0 <= gamma <= 1.0:
        raise ValueError("gamma must lie in [0, 1]")
    if dataset.size < 1:
        raise ValueError("empty current dataset")
    a, n, m = memory.cumulative, dataset.size, memory.budget
    mem_bias = a / (a + n)
    cur_bias = m / (a + n)
    parts = []
    if memory.size:
        q_mem = np.asarray(q(memory.xs), dtype=np.float64)
        parts.append((1.0 - gamma) * q_mem + gamma * mem_bias)
    q_cur = np.asarray(q(dataset.x), dtype=np.float64)
    parts.append((1.0 - gamma) * q_cur + gamma * cur_bias)
    weights = np.concatenate(parts)
    if not np.isfinite(weights).all():
        raise ValueError("density score produced non-finite weights")
    return WeightSet(weights)


def weighted_sample_without_replacement(weights, count, seed):
    """Select ``count`` distinct indices, probability-proportional-to-weight.

    Uses the exponential-keys scheme: item i gets key u_i^(1/w_i) with u_i
    uniform, and the ``count`` largest keys win (computed as log(u)/w for
    numerical range). Pools no larger than ``count`` are returned whole.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    w = weights.weights if isinstance(weights, WeightSet) else np.asarray(weights, dtype=np.float64)
    n = len(w)
    if n == 0:
        raise ValueError("empty weight set")
    if n <= count:
        return np.arange(n)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    keys = np.log(rng.random(n)) / w
    return np.argpartition(-keys, count)[:count]


@dataclass(frozen=True)
class MemoryUpdateInfo:
    """Diagnostics from one memory update."""

    gamma: float
    bandwidth: float  # nan when no KDE was fit


def select_memory(memory, dataset, repr_fn, seed, gamma_override=None, bandwidth_grid=None):
    """One memory update; returns the new MemorySet plus diagnostics.

    First period (empty memory): every current sample gets the same weight
    M/N via the gamma=1, q=0.5 weighting, and M of them are drawn. Later
    periods: fit a KDE on the memory inputs, score the pooled samples, set
    gamma from the shift level of those scores, weight, and draw. The hint
    representation z is recomputed with ``repr_fn`` for every selected
    sample, survivors included. ``gamma_override`` pins gamma (1.0 gives
    pure biased-coefficient weighting and skips the KDE/GMM entirely).
    """
    if dataset.size < 1:
        raise ValueError("empty current dataset")
    bandwidth = float("nan")
    flat_q = lambda xs: np.full(len(xs), 0.5)  # noqa: E731 - the constant-score q
    if memory.size == 0:
        # first period: gamma=1 with a constant q gives every sample M/N
        gamma = 1.0 if gamma_override is None else float(gamma_override)
        q = flat_q
    elif gamma_override is not None:
        gamma = float(gamma_override)
        if gamma == 1.0:
            q = flat_q  # density scores are multiplied by zero; skip the KDE
        else:
            q, bandwidth = _scored_q(memory, bandwidth_grid)
    else:
        q, bandwidth = _scored_q(memory, bandwidth_grid)
        pool_scores = np.concatenate([q(memory.xs), q(dataset.x)])
        gamma = shift_level_score(pool_scores).gamma
    weights = sample_weight(memory, dataset, q, gamma)
    chosen = weighted_sample_without_replacement(weights, memory.budget, seed)
    pool_x = np.concatenate([memory.xs, dataset.x]) if memory.size else dataset.x
    pool_y = np.concatenate([memory.ys, dataset.y]) if memory.size else dataset.y
    xs = pool_x[chosen]
    ys = pool_y[chosen]
    zs = np.atleast_2d(np.asarray(repr_fn(xs), dtype=np.float64))
    new = MemorySet(xs, zs, ys, memory.budget, memory.cumulative + dataset.size)
    return new, MemoryUpdateInfo(gamma=float(gamma), bandwidth=bandwidth)


def _scored_q(memory, bandwidth_grid):
    model = fit_density(memory.xs, bandwidth_grid)
    return (lambda xs: density_score(densities(model, xs))), model.bandwidth


def update_memory(memory, dataset, repr_fn, seed, gamma_override=None):
    """Density-based memory selection; see ``select_memory`` for the steps."""
    new, _ = select_memory(memory, dataset, repr_fn, seed, gamma_override)
    return new


def snapshot(memory, period):
    """JSON-ready snapshot: header (period, budget, cumulative) + entries."""
    return {
        "period": int(period),
        "budget": int(memory.budget),
        "cumulative": int(memory.cumulative),
        "entries": [
            {"x": list(memory.xs[i]), "z": list(memory.zs[i]), "y": list(memory.ys[i])}
            for i in range(memory.size)
        ],
    }


def snapshot_to_json(memory, period):
    return json.dumps(snapshot(memory, period), sort_keys=True)


def snapshot_from_json(text):
    doc = json.loads(text)
    entries = doc["entries"]
    if entries:
        xs = np.array([e["x"] for e in entries])
        zs = np.array([e["z"] for e in entries])
        ys = np.array([e["y"] for e in entries])
    else:
        xs = zs = ys = np.zeros((0, 0))
    return MemorySet(xs, zs, ys, doc["budget"], doc["cumulative"]), doc["period"]
