"""numba-compiled twins of ``_numpy.py``."""
import math

import numpy as np
from numba import njit

LOGIT_BOUND = 800.0


@njit(cache=True)
def _softplus(x):
    return max(x, 0.0) + math.log1p(math.exp(-abs(x)))


@njit(cache=True)
def _solve_logit(t, log_scale, a, b, tol, max_iter):
    n = t.shape[0]
    out = np.empty(n)
    iters = 0
    for i in range(n):
        lo = -LOGIT_BOUND
        hi = LOGIT_BOUND
        k = 0
        while k < max_iter:
            mid = 0.5 * (lo + hi)
            z = log_scale - b * _softplus(mid) + a * _softplus(-mid)
            if z > t[i]:
                lo = mid
            else:
                hi = mid
            k += 1
            if hi - lo < tol:
                break
        out[i] = 0.5 * (lo + hi)
        if k > iters:
            iters = k
    return out, iters


def solve_logit(targets, log_scale, a, b, tol=1e-12, max_iter=200):
    t = np.ascontiguousarray(np.asarray(targets, dtype=np.float64).ravel())
    return _solve_logit(t, float(log_scale), float(a), float(b), float(tol), int(max_iter))


@njit(cache=True)
def _kde_grid(data, grid, bandwidth):
    n = data.shape[0]
    m = grid.shape[0]
    out = np.empty(m)
    norm = 1.0 / (n * bandwidth * math.sqrt(2.0 * math.pi))
    for j in range(m):
        acc = 0.0
        g = grid[j]
        for i in range(n):
            d = (g - data[i]) / bandwidth
            acc += math.exp(-0.5 * d * d)
        out[j] = acc * norm
    return out


def kde_grid(data, grid, bandwidth):
    return _kde_grid(np.ascontiguousarray(data, dtype=np.float64),
                     np.ascontiguousarray(grid, dtype=np.float64), float(bandwidth))


@njit(cache=True)
def _accumulate(src, dst, weight, n_nodes):
    in_deg = np.zeros(n_nodes, dtype=np.int64)
    out_deg = np.zeros(n_nodes, dtype=np.int64)
    in_str = np.zeros(n_nodes, dtype=np.int64)
    out_str = np.zeros(n_nodes, dtype=np.int64)
    for e in range(src.shape[0]):
        s = src[e]
        d = dst[e]
        out_deg[s] += 1
        in_deg[d] += 1
        out_str[s] += weight[e]
        in_str[d] += weight[e]
    return in_deg, out_deg, in_str, out_str


def accumulate_centralities(src, dst, weight, n_nodes):
    return _accumulate(np.ascontiguousarray(src, dtype=np.int64),
                       np.ascontiguousarray(dst, dtype=np.int64),
                       np.ascontiguousarray(weight, dtype=np.int64), int(n_nodes))
