"""Experiment orchestration: method variants, historical/future evaluation
sets, per-period metrics (FE/PE), and the 2-D diagnostic projection."""

import csv
import json
import math
import os
from dataclasses import dataclass, replace

import numpy as np

from .data import PeriodDataset, apply_scaler, fit_scaler
from .memory import MemorySet, select_memory
from .model import TrainingDivergenceError, forward_batch, train_period

METHOD_KINDS = ("dmshm", "dmshm_no_dms", "dmshm_no_hint", "finetune")


@dataclass(frozen=True)
class MethodSpec:
    """A runnable method variant.

    finetune drops the memory and all replay/hint terms; dmshm_no_dms
    replaces the density-mixed weights with pure biased coefficients
    (gamma pinned to 1); dmshm_no_hint zeroes the hint coefficient xi but
    keeps the memory terms intact.
    """

    kind: str
    loss_weights: object = None  # optional LossWeights override
    memory_budget: int = None  # optional budget override

    def __post_init__(self):
        if self.kind not in METHOD_KINDS:
            raise ValueError(f"unknown method kind {self.kind!r}; choose from {METHOD_KINDS}")

    @property
    def uses_memory(self):
        return self.kind != "finetune"

    @property
    def gamma_override(self):
        return 1.0 if self.kind == "dmshm_no_dms" else None

    def effective_weights(self, base):
        w = self.loss_weights if self.loss_weights is not None else base
        if self.kind == "finetune":
            return replace(w, alpha=0.0, beta=0.0, xi=0.0)
        if self.kind == "dmshm_no_hint":
            return replace(w, xi=0.0)
        return w


@dataclass(frozen=True)
class PeriodRecord:
    period: int
    historical_mse: float
    future_mse: float
    gamma: float
    bandwidth: float
    train_loss_final: float

    def __post_init__(self):
        if self.historical_mse < 0 or self.future_mse < 0:
            raise ValueError("MSE cannot be negative")


@dataclass(frozen=True)
class MetricsReport:
    records: tuple
    fe: float  # mean historical MSE over all periods
    pe: float  # future MSE of the final period
    method: MethodSpec
    seed: int

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        fe = float(np.mean([r.historical_mse for r in self.records]))
        pe = self.records[-1].future_mse
        if not (math.isclose(fe, self.fe, rel_tol=1e-12) and math.isclose(pe, self.pe, rel_tol=1e-12)):
            raise ValueError("FE/PE fields disagree with their recomputation from records")


def mse(params, dataset):
    """Mean over samples of the mean-over-dimensions squared error."""
    if dataset.size < 1:
        raise ValueError("empty evaluation dataset")
    _, yhat = forward_batch(params, dataset.x)
    return float(((yhat - dataset.y) ** 2).mean(axis=1).mean())


def build_eval_sets(stream, future_fraction, seed):
    """Historical set = a copy of period 1; future set = a seeded uniform
    draw (without replacement) across every period's samples."""
    stream = list(stream)
    if not stream:
        raise ValueError("empty stream")
    if not 0.0 < future_fraction <= 1.0:
        raise ValueError("future_fraction must lie in (0, 1]")
    first = stream[0]
    historical = PeriodDataset(first.index, first.x, first.y)
    all_x = np.concatenate([p.x for p in stream])
    all_y = np.concatenate([p.y for p in stream])
    total = len(all_x)
    count = math.ceil(future_fraction * total)
    rng = np.random.default_rng(seed)
    pick = rng.choice(total, size=count, replace=False)
    future = PeriodDataset(1, all_x[pick], all_y[pick])
    return historical, future


def _seed_int(*parts):
    return int(np.random.SeedSequence(list(parts)).generate_state(1)[0])


def run_experiment(stream, method, train_config, memory_budget, seed, future_fraction=0.1):
    """The continual-learning loop over one stream.

    Per period: train on current data (plus memory and hint per method),
    record historical/future MSE of the trained model, then update the
    memory with the trained representation. Features are standardized with
    a scaler fit on period 1 only; MSE stays in original target units.
    """
    stream = list(stream)
    if len(stream) < 2:
        raise ValueError("a stream of at least 2 periods is required")
    budget = method.memory_budget if method.memory_budget is not None else memory_budget
    scaler = fit_scaler(stream[:1])
    scaled = [apply_scaler(scaler, p) for p in stream]
    historical, future = build_eval_sets(scaled, future_fraction, _seed_int(seed, 0))
    memory = MemorySet.empty(budget)
    params = None
    weights = method.effective_weights(train_config.loss_weights)
    records = []
    for n, period in enumerate(scaled, start=1):
        config_n = replace(
            train_config, loss_weights=weights, seed=_seed_int(seed, n, 1)
        )
        mem_in = memory if method.uses_memory else MemorySet.empty(budget)
        try:
            params, trace = train_period(params, mem_in, period, config_n)
        except TrainingDivergenceError as err:
            raise TrainingDivergenceError(
                f"period {n}: {err}", epoch=err.epoch, period=n
            ) from None
        gamma = float("nan")
        bandwidth = float("nan")
        if method.uses_memory:
            trained = params
            memory, info = select_memory(
                memory,
                period,
                lambda xs: forward_batch(trained, xs)[0],
                _seed_int(seed, n, 2),
                gamma_override=method.gamma_override,
            )
            gamma, bandwidth = info.gamma, info.bandwidth
        records.append(
            PeriodRecord(
                period=n,
                historical_mse=mse(params, historical),
                future_mse=mse(params, future),
                gamma=gamma,
                bandwidth=bandwidth,
                train_loss_final=trace[-1],
            )
        )
    fe = float(np.mean([r.historical_mse for r in records]))
    pe = records[-1].future_mse
    return MetricsReport(tuple(records), fe, pe, method, seed)


def pca_project_2d(points, tol=1e-9, max_iter=1000):
    """Project points onto their top-2 principal components.

    Eigenvectors come from power iteration with deflation; each component's
    sign is fixed so its largest-magnitude loading is positive.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    n, k = pts.shape
    if n < 3:
        raise ValueError("need at least 3 points")
    if k < 2:
        raise ValueError("need at least 2 dimensions")
    centered = pts - pts.mean(axis=0)
    cov = centered.T @ centered / (n - 1)
    scale = np.abs(cov).max()
    if scale <= 0:
        raise ValueError("all points identical: no principal directions")
    comps = []
    work = cov.copy()
    for _ in range(2):
        vec = _power_iteration(work, comps, scale, tol, max_iter)
        if vec is None:  # rank deficit: any unit vector orthogonal to comps
            vec = _orthogonal_fill(comps, k)
        lam = float(vec @ work @ vec)
        comps.append(_fix_sign(vec))
        work = work - lam * np.outer(vec, vec)
    basis = np.stack(comps, axis=1)
    return centered @ basis


def _power_iteration(mat, prior, scale, tol, max_iter):
    # deflation leaves roundoff along prior components; re-orthogonalize each
    # iterate so the basis stays orthonormal to machine precision
    if np.abs(mat).max() < tol * scale:
        return None
    start = np.random.default_rng(0).standard_normal(mat.shape[0])
    vec = _orthogonalize(start, prior)
    if vec is None:
        return None
    for _ in range(max_iter):
        nxt = _orthogonalize(mat @ vec, prior)
        if nxt is None:
            return None
        if np.linalg.norm(nxt - vec) < tol or np.linalg.norm(nxt + vec) < tol:
            return nxt
        vec = nxt
    return vec


def _orthogonalize(vec, prior):
    for c in prior:
        vec = vec - (vec @ c) * c
    norm = np.linalg.norm(vec)
    if norm < 1e-15:
        return None
    return vec / norm


def _fix_sign(vec):
    lead = np.argmax(np.abs(vec))
    return -vec if vec[lead] < 0 else vec


def _orthogonal_fill(comps, k):
    for i in range(k):
        cand = np.zeros(k)
        cand[i] = 1.0
        for c in comps:
            cand = cand - (cand @ c) * c
        norm = np.linalg.norm(cand)
        if norm > 1e-12:
            return cand / norm
    raise ValueError("could not build an orthogonal complement")


def write_run_outputs(report, out_dir, resolved_config=None, projection_points=None):
    """Write metrics.json and periods.csv (plus optional projection.csv and
    the resolved config) into one run directory."""
    os.makedirs(out_dir, exist_ok=True)
    metrics = {
        "method": report.method.kind,
        "seed": report.seed,
        "fe": report.fe,
        "pe": report.pe,
    }
    with open(os.path.join(out_dir, "metrics.json"), "w", encoding="utf-8") as fh:
        json.dump(metrics, fh, sort_keys=True, separators=(",", ":"))
    with open(os.path.join(out_dir, "periods.csv"), "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["period", "historical_mse", "future_mse", "gamma", "bandwidth", "train_loss_final"]
        )
        for r in report.records:
            writer.writerow(
                [r.period, repr(r.historical_mse), repr(r.future_mse), repr(r.gamma),
                 repr(r.bandwidth), repr(r.train_loss_final)]
            )
    if resolved_config is not None:
        with open(os.path.join(out_dir, "config.json"), "w", encoding="utf-8") as fh:
            json.dump(resolved_config, fh, sort_keys=True, indent=2)
    if projection_points is not None:
        coords = pca_project_2d(np.concatenate([x for _, x in projection_points]))
        with open(os.path.join(out_dir, "projection.csv"), "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["period", "x1", "x2"])
            row = 0
            for period, x in projection_points:
                for _ in range(len(x)):
                    writer.writerow([period, repr(coords[row, 0]), repr(coords[row, 1])])
                    row += 1
