"""Hot numeric kernels with a numba fast path and a pure-numpy fallback.

The numba path is the default. Set ``DRIFTMEM_NUMBA=0`` to force the
numpy implementations (useful for debugging and as a baseline in
``benchmarks/bench_kernels.py``). Both paths implement the same math;
results agree to floating-point roundoff, and each path is
deterministic on its own.
"""

import os

import numpy as np

LOG_FLOOR = -745.0  # smallest log a float64 can exp() back from

try:
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a hard dep, but stay importable
    _HAVE_NUMBA = False

USE_NUMBA = _HAVE_NUMBA and os.environ.get("DRIFTMEM_NUMBA", "1") != "0"


def _gauss_norm(dim, bandwidth, n_points):
    # (2*pi)^(-k/2) / (n * b^k)
    return (2.0 * np.pi) ** (-0.5 * dim) / (n_points * bandwidth**dim)


# ---------------------------------------------------------------------------
# numpy implementations


def _kde_eval_np(points, queries, bandwidth):
    n, k = points.shape
    inv2b2 = 1.0 / (2.0 * bandwidth * bandwidth)
    out = np.empty(len(queries))
    # chunk queries so the pairwise distance block stays small
    step = max(1, 2**22 // max(n, 1))
    for lo in range(0, len(queries), step):
        q = queries[lo : lo + step]
        sq = ((q[:, None, :] - points[None, :, :]) ** 2).sum(axis=2)
        out[lo : lo + step] = np.exp(-sq * inv2b2).sum(axis=1)
    return out * _gauss_norm(k, bandwidth, n)


def _loo_scores_np(points, grid):
    n, k = points.shape
    sq = ((points[:, None, :] - points[None, :, :]) ** 2).sum(axis=2)
    scores = np.empty(len(grid))
    for gi, b in enumerate(grid):
        w = np.exp(-sq / (2.0 * b * b))
        # subtract the self term exp(0) = 1 from each row
        row = w.sum(axis=1) - 1.0
        dens = row * _gauss_norm(k, b, n - 1)
        with np.errstate(divide="ignore"):
            logs = np.log(dens)
        scores[gi] = np.maximum(logs, LOG_FLOOR).sum()
    return scores


# ---------------------------------------------------------------------------
# numba implementations

if _HAVE_NUMBA:

    @njit(cache=True)
    def _kde_eval_nb(points, queries, bandwidth):
        n, k = points.shape
        nq = queries.shape[0]
        inv2b2 = 1.0 / (2.0 * bandwidth * bandwidth)
        norm = (2.0 * np.pi) ** (-0.5 * k) / (n * bandwidth**k)
        out = np.empty(nq)
        for i in range(nq):
            acc = 0.0
            for j in range(n):
                sq = 0.0
                for d in range(k):
                    diff = queries[i, d] - points[j, d]
                    sq += diff * diff
                acc += np.exp(-sq * inv2b2)
            out[i] = acc * norm
        return out

    @njit(cache=True)
    def _loo_scores_nb(points, grid):
        n, k = points.shape
        sq = np.empty((n, n))
        for i in range(n):
            sq[i, i] = 0.0
            for j in range(i + 1, n):
                acc = 0.0
                for d in range(k):
                    diff = points[i, d] - points[j, d]
                    acc += diff * diff
                sq[i, j] = acc
                sq[j, i] = acc
        scores = np.empty(len(grid))
        for gi in range(len(grid)):
            b = grid[gi]
            inv2b2 = 1.0 / (2.0 * b * b)
            norm = (2.0 * np.pi) ** (-0.5 * k) / ((n - 1) * b**k)
            total = 0.0
            for i in range(n):
                row = 0.0
                for j in range(n):
                    if j != i:
                        row += np.exp(-sq[i, j] * inv2b2)
                dens = row * norm
                if dens > 0.0:
                    lg = np.log(dens)
                    if lg < LOG_FLOOR:
                        lg = LOG_FLOOR
                else:
                    lg = LOG_FLOOR
                total += lg
            scores[gi] = total
        return scores


def kde_eval(points, queries, bandwidth):
    """Gaussian-kernel density of each query under the point set.

    ``points`` is (n, k), ``queries`` (q, k); returns a (q,) array of
    (1 / (n b^k)) * sum_i (2 pi)^(-k/2) exp(-||x - x_i||^2 / (2 b^2)).
    """
    points = np.ascontiguousarray(points, dtype=np.float64)
    queries = np.ascontiguousarray(queries, dtype=np.float64)
    if USE_NUMBA:
        return _kde_eval_nb(points, queries, bandwidth)
    return _kde_eval_np(points, queries, bandwidth)


def loo_scores(points, grid):
    """Leave-one-out log-likelihood of each candidate bandwidth.

    For candidate b, scores sum_i log d_{-i}(x_i) where d_{-i} is the
    density over the other n-1 points. Zero densities contribute
    ``LOG_FLOOR`` instead of -inf.
    """
    points = np.ascontiguousarray(points, dtype=np.float64)
    grid = np.ascontiguousarray(grid, dtype=np.float64)
    if USE_NUMBA:
        return _loo_scores_nb(points, grid)
    return _loo_scores_np(points, grid)
