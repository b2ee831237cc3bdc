"""Pure-numpy implementations of the hot loops.

These are the reference path. The numba twins in ``_numba.py`` must return
the same values (to rounding) for the same inputs.
"""
import numpy as np

LOGIT_BOUND = 800.0


def softplus(x):
    x = np.asarray(x, dtype=np.float64)
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def solve_logit(targets, log_scale, a, b, tol=1e-12, max_iter=200):
    """Solve ``log_scale - b*softplus(s) + a*softplus(-s) = target`` for ``s``.

    The left-hand side is ``log x(u)`` with ``u = expit(s)``; it is
    non-increasing in ``s``, so plain bisection on ``[-800, 800]`` applies.
    Returns ``(s, iterations)``.
    """
    t = np.asarray(targets, dtype=np.float64).ravel()
    lo = np.full(t.shape, -LOGIT_BOUND)
    hi = np.full(t.shape, LOGIT_BOUND)
    it = 0
    while it < max_iter:
        mid = 0.5 * (lo + hi)
        z = log_scale - b * softplus(mid) + a * softplus(-mid)
        above = z > t
        lo = np.where(above, mid, lo)
        hi = np.where(above, hi, mid)
        it += 1
        if np.all(hi - lo < tol):
            break
    return 0.5 * (lo + hi), it


def kde_grid(data, grid, bandwidth, block=256):
    data = np.asarray(data, dtype=np.float64)
    grid = np.asarray(grid, dtype=np.float64)
    out = np.empty(grid.shape[0])
    norm = 1.0 / (data.shape[0] * bandwidth * np.sqrt(2.0 * np.pi))
    for start in range(0, grid.shape[0], block):
        g = grid[start:start + block]
        d = (g[:, None] - data[None, :]) / bandwidth
        out[start:start + block] = np.exp(-0.5 * d * d).sum(axis=1) * norm
    return out


def accumulate_centralities(src, dst, weight, n_nodes):
    src = np.asarray(src, dtype=np.int64)
    dst = np.asarray(dst, dtype=np.int64)
    weight = np.asarray(weight, dtype=np.int64)
    out_deg = np.bincount(src, minlength=n_nodes).astype(np.int64)
    in_deg = np.bincount(dst, minlength=n_nodes).astype(np.int64)
    # bincount with weights goes through float64; exact for counts < 2**53
    out_str = np.bincount(src, weights=weight, minlength=n_nodes).astype(np.int64)
    in_str = np.bincount(dst, weights=weight, minlength=n_nodes).astype(np.int64)
    return in_deg, out_deg, in_str, out_str
