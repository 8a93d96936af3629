"""Gaussian KDE with leave-one-out ML bandwidth selection, the sigmoid
density score, and the two-component-GMM shift level.

The density of a query x under a fitted model with points x_i and scalar
bandwidth b is

    d(x) = (1 / (n b^k)) * sum_i (2 pi)^(-k/2) exp(-||x - x_i||^2 / (2 b^2))

i.e. a product-form Gaussian kernel with one bandwidth for all k
dimensions; callers are expected to standardize features first.
"""

from dataclasses import dataclass

import numpy as np

from . import kernels

VAR_FLOOR = 1e-10
EM_MAX_ITER = 200
EM_TOL = 1e-8


@dataclass(frozen=True)
class DensityModel:
    """Immutable KDE over a point set."""

    points: np.ndarray  # (n, k)
    bandwidth: float

    def __post_init__(self):
        pts = np.array(np.atleast_2d(self.points), dtype=np.float64)
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        if len(pts) < 1:
            raise ValueError("a density model needs at least one point")
        if not self.bandwidth > 0:
            raise ValueError("bandwidth must be positive")

    @property
    def dim(self):
        return self.points.shape[1]


@dataclass(frozen=True)
class GmmFit:
    """Two-component 1-D Gaussian mixture, with the EM log-likelihood trace."""

    means: np.ndarray  # (2,)
    variances: np.ndarray  # (2,)
    mixing: np.ndarray  # (2,)
    log_likelihood_trace: tuple


@dataclass(frozen=True)
class ShiftLevel:
    """Distribution-shift indicator in [0, 1]."""

    gamma: float

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")


def default_bandwidth_grid(points, size=20):
    """20 log-spaced candidates from 0.05 to 5 times the mean per-dimension
    stddev of the points."""
    points = np.atleast_2d(points)
    sigma = float(points.std(axis=0).mean())
    if sigma <= 0:
        sigma = 1.0
    return np.geomspace(0.05 * sigma, 5.0 * sigma, size)


def fit_bandwidth_mlcv(points, grid):
    """Pick the grid bandwidth maximizing the leave-one-out log-likelihood.

    Zero leave-one-out densities contribute a floored log (-745) instead of
    -inf, and exact score ties resolve to the larger (smoother) bandwidth.
    """
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    grid = np.asarray(grid, dtype=np.float64)
    if len(points) < 2:
        raise ValueError("leave-one-out needs at least 2 points")
    if grid.size == 0:
        raise ValueError("empty bandwidth grid")
    if np.any(grid <= 0):
        raise ValueError("bandwidth candidates must be positive")
    if np.any(np.diff(grid) <= 0):
        raise ValueError("bandwidth grid must be strictly ascending")
    scores = kernels.loo_scores(points, grid)
    best = np.flatnonzero(scores == scores.max())[-1]
    return float(grid[best])


def fit_density(points, grid=None):
    """Fit a KDE: MLCV bandwidth over ``grid`` (default grid if omitted)."""
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if grid is None:
        grid = default_bandwidth_grid(points)
    return DensityModel(points, fit_bandwidth_mlcv(points, grid))


def density(model, x):
    """Exact KDE density of one query point (>= 0, finite)."""
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    if x.shape != (model.dim,):
        raise ValueError(f"query has dimension {x.shape}, model expects ({model.dim},)")
    return float(kernels.kde_eval(model.points, x[None, :], model.bandwidth)[0])


def densities(model, xs):
    """KDE density of each row of ``xs``."""
    xs = np.atleast_2d(np.asarray(xs, dtype=np.float64))
    if xs.shape[1] != model.dim:
        raise ValueError(f"queries have dimension {xs.shape[1]}, model expects {model.dim}")
    return kernels.kde_eval(model.points, xs, model.bandwidth)


def density_score(d):
    """Sigmoid-smoothed density: 1 / (1 + e^-d), in [0.5, 1) for d >= 0.

    Large densities would round to exactly 1.0 in float64; the result is
    capped one ulp below so the half-open range holds.
    """
    d = np.asarray(d, dtype=np.float64)
    if np.any(~np.isfinite(d)) or np.any(d < 0):
        raise ValueError("density must be finite and non-negative")
    out = np.minimum(1.0 / (1.0 + np.exp(-d)), np.nextafter(1.0, 0.0))
    return float(out) if out.ndim == 0 else out


def _log_normal_pdf(x, mean, var):
    return -0.5 * (np.log(2.0 * np.pi * var) + (x - mean) ** 2 / var)


def fit_gmm_two(scores):
    """EM fit of a two-component 1-D Gaussian mixture.

    Means start at the 25th/75th percentiles, both variances at the overall
    variance, mixing at 1/2 each. Stops after 200 iterations or a
    log-likelihood gain below 1e-8; variances are floored at 1e-10. A
    component whose responsibility mass collapses below 1e-6 is re-seeded
    at a (deterministically) random score.
    """
    scores = np.asarray(scores, dtype=np.float64).ravel()
    if len(scores) < 2:
        raise ValueError("GMM fit needs at least 2 scores")
    means = np.percentile(scores, [25.0, 75.0]).astype(np.float64)
    variances = np.full(2, max(scores.var(), VAR_FLOOR))
    mixing = np.array([0.5, 0.5])
    reseed_rng = np.random.default_rng(0)
    sorted_scores = np.sort(scores)  # reseed from order statistics: permutation-invariant
    trace = []
    prev_ll = -np.inf
    for _ in range(EM_MAX_ITER):
        logp = np.stack(
            [np.log(mixing[c]) + _log_normal_pdf(scores, means[c], variances[c]) for c in range(2)]
        )
        top = logp.max(axis=0)
        log_total = top + np.log(np.exp(logp - top).sum(axis=0))
        ll = float(log_total.sum())
        trace.append(ll)
        if ll - prev_ll < EM_TOL and np.isfinite(prev_ll):
            break
        prev_ll = ll
        resp = np.exp(logp - log_total)
        mass = resp.sum(axis=1)
        for c in range(2):
            if mass[c] < 1e-6:
                means[c] = sorted_scores[reseed_rng.integers(len(sorted_scores))]
                variances[c] = max(scores.var(), VAR_FLOOR)
                mass[c] = 1e-6
            else:
                means[c] = (resp[c] * scores).sum() / mass[c]
                variances[c] = max((resp[c] * (scores - means[c]) ** 2).sum() / mass[c], VAR_FLOOR)
        mixing = mass / mass.sum()
    return GmmFit(means, variances, mixing, tuple(trace))


def shift_level_score(scores):
    """Absolute gap between the two GMM component means, clamped to [0, 1]."""
    fit = fit_gmm_two(scores)
    gamma = abs(float(fit.means[0] - fit.means[1]))
    return ShiftLevel(min(max(gamma, 0.0), 1.0))
