"""Synthetic daily OD networks with BRF-distributed degree and strength.

Used by the tests and the acceptance harness. A day is built in three steps:

1. Per-node targets. Degree and strength uniforms come from a Gaussian
   copula (correlated, as real degree and strength are) and are pushed
   through the two BRF quantile functions. Degrees are rounded to at least 1;
   strengths are kept at least as large as degrees (every edge carries at
   least one trip).
2. Topology. Each node's degree is split into out- and in-stubs, and stubs
   are paired at random in rounds; pairs that would create a self-loop or a
   duplicate edge go back into the pool for the next round.
3. Weights. Edge weights start at 1 and are rescaled by iterative
   proportional fitting toward each node's out- and in-strength targets,
   floored at 1, then rounded stochastically to integers.
"""
import warnings

import numpy as np
from scipy import special

from .distributions import BrfQuantile, DgbdParams, brf_quantile
from .errors import DomainError
from .od_network import DailyNetwork

COPULA_RHO = 0.9
PAIRING_ROUNDS = 60
IPF_ITER = 300
IPF_TOL = 1e-9
DEFAULT_DEGREE = BrfQuantile.from_values(30.0, 0.35, 0.45)
DEFAULT_STRENGTH = BrfQuantile.from_values(300.0, 0.6, 0.3)


def _as_brf(params):
    if isinstance(params, BrfQuantile):
        return params
    if isinstance(params, DgbdParams):
        return params.to_brf()
    A, a, b = params
    return BrfQuantile.from_values(A, a, b)


def node_ids(n_nodes):
    width = len(str(n_nodes - 1))
    return [f"S{i:0{width}d}" for i in range(n_nodes)]


def _copula_uniforms(rng, n, rho):
    z1 = rng.standard_normal(n)
    z2 = rho * z1 + np.sqrt(1.0 - rho * rho) * rng.standard_normal(n)
    # ndtr of a finite normal draw can round to exactly 0 or 1 in the far tail
    eps = np.finfo(np.float64).eps
    return (np.clip(special.ndtr(z1), eps, 1 - eps), np.clip(special.ndtr(z2), eps, 1 - eps))


def _pair_stubs(rng, out_k, in_k, n):
    """Random simple directed graph close to the given out/in degree sequences."""
    out_stubs = np.repeat(np.arange(n), out_k)
    in_stubs = np.repeat(np.arange(n), in_k)
    keys = np.zeros(0, dtype=np.int64)
    for _ in range(PAIRING_ROUNDS):
        m = min(out_stubs.size, in_stubs.size)
        if m == 0:
            break
        out_stubs = rng.permutation(out_stubs)
        in_stubs = rng.permutation(in_stubs)
        s, t = out_stubs[:m], in_stubs[:m]
        cand = s.astype(np.int64) * n + t
        _, first = np.unique(cand, return_index=True)
        ok = np.zeros(m, dtype=bool)
        ok[first] = True
        ok &= (s != t) & ~np.isin(cand, keys)
        if not ok.any():
            break
        keys = np.union1d(keys, cand[ok])
        out_stubs = np.concatenate([s[~ok], out_stubs[m:]])
        in_stubs = np.concatenate([t[~ok], in_stubs[m:]])
    return keys // n, keys % n, int(out_stubs.size + in_stubs.size)


def _fit_weights(src, dst, t_out, t_in, n):
    """IPF of edge weights toward node out/in strength targets, with weights kept >= 1."""
    w = np.ones(src.size)
    for _ in range(IPF_ITER):
        prev = w.copy()
        cur = np.bincount(src, weights=w, minlength=n)
        w *= (t_out / np.where(cur > 0, cur, 1.0))[src]
        cur = np.bincount(dst, weights=w, minlength=n)
        w *= (t_in / np.where(cur > 0, cur, 1.0))[dst]
        np.maximum(w, 1.0, out=w)
        if np.max(np.abs(w - prev) / prev) < IPF_TOL:
            break
    return w


def generate_synthetic_day(n_nodes, degree_params=DEFAULT_DEGREE, strength_params=DEFAULT_STRENGTH,
                           seed=0, date=None, rho=COPULA_RHO):
    """A directed weighted network whose total degrees and strengths follow the given BRFs.

    ``degree_params`` and ``strength_params`` are BrfQuantile, DgbdParams or
    ``(A, a, b)`` triples. Degree targets above ``2 (n_nodes - 1)`` are
    clamped with a warning. Deterministic for a given ``seed``.
    """
    if n_nodes < 10:
        raise DomainError(f"n_nodes must be at least 10, got {n_nodes}")
    qd, qs = _as_brf(degree_params), _as_brf(strength_params)
    rng = np.random.default_rng(seed)
    n = int(n_nodes)
    ud, us = _copula_uniforms(rng, n, rho)
    # the BRF quantile is decreasing in u, so 1 - u keeps the two draws positively related
    k = np.maximum(np.rint(brf_quantile(qd, 1 - ud)), 1).astype(np.int64)
    k_max = 2 * (n - 1)
    n_clamped = int(np.count_nonzero(k > k_max))
    if n_clamped:
        warnings.warn(f"{n_clamped} degree targets exceed {k_max} and were clamped", RuntimeWarning,
                      stacklevel=2)
        k = np.minimum(k, k_max)
    s = np.maximum(brf_quantile(qs, 1 - us), k)

    out_k = k // 2 + ((k % 2 == 1) & (rng.random(n) < 0.5))
    out_k = np.minimum(out_k, n - 1)
    in_k = np.minimum(k - out_k, n - 1)
    src, dst, n_unplaced = _pair_stubs(rng, out_k, in_k, n)

    real_out = np.bincount(src, minlength=n)
    real_in = np.bincount(dst, minlength=n)
    real_k = real_out + real_in
    share = np.divide(real_out, real_k, out=np.zeros(n), where=real_k > 0)
    t_out = s * share
    t_in = s * (1 - share)
    t_out = np.maximum(t_out, real_out)
    t_in = np.maximum(t_in, real_in)
    # IPF needs equal margins; scale the in side onto the out total
    t_in *= t_out.sum() / t_in.sum()
    w = _fit_weights(src, dst, t_out, t_in, n)
    base = np.floor(w)
    w_int = (base + (rng.random(w.size) < (w - base))).astype(np.int64)

    ids = node_ids(n)
    net = DailyNetwork._from_arrays(date, [ids[i] for i in src], [ids[i] for i in dst], w_int,
                                    isolated=ids)
    net.meta.update({"synthetic": True, "seed": seed, "n_clamped": n_clamped,
                     "n_unplaced_stubs": n_unplaced,
                     "degree_params": [qd.A, qd.a, qd.b], "strength_params": [qs.A, qs.a, qs.b]})
    return net
