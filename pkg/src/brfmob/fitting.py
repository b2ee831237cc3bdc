"""Rank-size fits of the DGBD and power-law curves, and the lognormal fit.

DGBD and power-law fits minimize squared residuals between the ranked
observations and the rank-size curve, by Levenberg-Marquardt, either on log
sizes (default) or on raw sizes. Internally the scale is carried as
``log A``; shapes ``a, b`` are kept non-negative with an active-set
projection.
"""
from dataclasses import dataclass, field
import math

import numpy as np
from scipy import stats

from .distributions import DgbdParams
from .errors import InsufficientDataError, UsageError

FIT_SPACES = ("log", "raw")
MODELS = ("brf", "power_law", "lognormal")

LM_LAMBDA0 = 1e-3
LM_LAMBDA_UP = 10.0
LM_LAMBDA_DOWN = 10.0
LM_RTOL = 1e-10
LM_XTOL = 1e-10
LM_MAX_ITER = 500
# rss below this fraction of the sum of squared targets is rounding noise
RSS_ROUNDING = 1e-26


@dataclass(frozen=True)
class RankedSample:
    """Observations sorted in decreasing order; the rank of ``values[i]`` is ``i + 1``."""

    values: np.ndarray
    label: str = ""
    n_dropped: int = 0

    @property
    def N(self):
        return int(self.values.shape[0])

    @property
    def ranks(self):
        return np.arange(1, self.N + 1)

    def __len__(self):
        return self.N


@dataclass
class FitReport:
    model: str
    params: dict
    rss: float
    n_params: int
    n: int
    fit_space: str = "log"
    converged: bool = True
    iterations: int = 0
    degenerate: bool = False
    rss_is_nll: bool = False   # lognormal: ``rss`` holds the negative log-likelihood
    messages: list = field(default_factory=list)

    def dgbd(self):
        """The fitted rank-size parameters (power law as ``b = 0``)."""
        if self.model == "lognormal":
            raise UsageError("a lognormal fit has no rank-size parameters")
        return DgbdParams(self.params["A"], self.params["a"], self.params.get("b", 0.0), self.n)

    def to_dict(self):
        return {
            "model": self.model,
            "params": dict(self.params),
            "rss": self.rss,
            "rss_is_nll": self.rss_is_nll,
            "n_params": self.n_params,
            "n": self.n,
            "fit_space": self.fit_space,
            "converged": self.converged,
            "iterations": self.iterations,
            "degenerate": self.degenerate,
            "messages": list(self.messages),
        }


def rank_sample(observations, label="", strict=False):
    """Sort positive observations in decreasing order (stable for ties).

    Non-positive or non-finite entries raise ``InsufficientDataError`` when
    ``strict`` and are dropped otherwise; the drop count is kept on the
    result.
    """
    x = np.asarray(observations, dtype=np.float64).ravel()
    ok = np.isfinite(x) & (x > 0)
    n_bad = int(x.size - ok.sum())
    if strict and n_bad:
        raise InsufficientDataError(f"{n_bad} non-positive or non-finite observations")
    x = x[ok]
    if x.size < 3:
        raise InsufficientDataError(f"need at least 3 positive observations, got {x.size}")
    order = np.argsort(-x, kind="stable")
    return RankedSample(x[order], label=label, n_dropped=n_bad)


def _as_ranked(sample):
    return sample if isinstance(sample, RankedSample) else rank_sample(sample)


def levenberg_marquardt(residual, jacobian, theta0, nonneg, max_iter=LM_MAX_ITER):
    """Minimize ``sum(residual(theta)**2)`` subject to ``theta[nonneg] >= 0``.

    Bound handling: a parameter sitting on its bound whose descent direction
    points outward is frozen for that iteration; every trial point is
    projected back onto the feasible box.

    Returns ``(theta, rss, iterations, converged, rss_history)``.
    """
    theta = np.array(theta0, dtype=np.float64)
    nonneg = np.asarray(nonneg, dtype=bool)
    theta[nonneg] = np.maximum(theta[nonneg], 0.0)
    r = residual(theta)
    rss = float(r @ r)
    lam = LM_LAMBDA0
    history = [rss]
    converged = False
    it = 0
    while it < max_iter:
        it += 1
        J = jacobian(theta)
        g = J.T @ r
        free = ~(nonneg & (theta <= 0.0) & (g > 0.0))
        if not free.any():
            converged = True
            break
        Jf = J[:, free]
        H = Jf.T @ Jf
        gf = g[free]
        if rss == 0.0 or not np.any(gf):
            converged = True
            break
        accepted = False
        while lam < 1e16:
            A = H + lam * np.diag(np.maximum(np.diag(H), 1e-12))
            try:
                step = -np.linalg.solve(A, gf)
            except np.linalg.LinAlgError:
                lam *= LM_LAMBDA_UP
                continue
            trial = theta.copy()
            trial[free] += step
            trial[nonneg] = np.maximum(trial[nonneg], 0.0)
            r_new = residual(trial)
            rss_new = float(r_new @ r_new)
            if np.isfinite(rss_new) and rss_new <= rss:
                accepted = True
                break
            lam *= LM_LAMBDA_UP
        if not accepted:
            # no descent possible at any damping: stationary to machine precision
            converged = True
            break
        actual_step = trial - theta
        improvement = (rss - rss_new) / rss if rss > 0 else 0.0
        theta, r, rss = trial, r_new, rss_new
        history.append(rss)
        lam = max(lam / LM_LAMBDA_DOWN, 1e-12)
        if improvement < LM_RTOL or np.linalg.norm(actual_step) < LM_XTOL * (np.linalg.norm(theta) + LM_XTOL):
            converged = True
            break
    return theta, rss, it, converged, history


def _design(N):
    r = np.arange(1, N + 1, dtype=np.float64)
    return np.log(r), np.log(N + 1.0 - r)


def _ols_init(y_log, log_r, log_rev, with_b):
    cols = [np.ones_like(log_r), -log_r] + ([log_rev] if with_b else [])
    X = np.column_stack(cols)
    coef, *_ = np.linalg.lstsq(X, y_log, rcond=None)
    return coef


def _regression_fit(sample, space, with_b, init):
    if space not in FIT_SPACES:
        raise UsageError(f"fit space must be one of {FIT_SPACES}, got {space!r}")
    s = _as_ranked(sample)
    N = s.N
    n_params = 3 if with_b else 2
    model = "brf" if with_b else "power_law"
    if N < 4:
        raise InsufficientDataError(f"need at least 4 observations to fit {model}, got {N}")
    x = s.values
    if x[0] == x[-1]:
        params = {"A": float(x[0]), "a": 0.0}
        if with_b:
            params["b"] = 0.0
        return FitReport(model, params, 0.0, n_params, N, space, True, 0, degenerate=True,
                         messages=["all observations equal"])

    log_r, log_rev = _design(N)
    y = np.log(x)
    cols = [np.ones(N), -log_r] + ([log_rev] if with_b else [])
    X_log = np.column_stack(cols)

    if space == "log":
        def residual(theta):
            return y - X_log @ theta

        def jacobian(theta):
            return -X_log
    else:
        def residual(theta):
            return x - np.exp(X_log @ theta)

        def jacobian(theta):
            return -np.exp(X_log @ theta)[:, None] * X_log

    starts = []
    if init is not None:
        t0 = [math.log(init.A), init.a] + ([init.b] if with_b else [])
        starts.append(np.array(t0))
    else:
        starts.append(_ols_init(y, log_r, log_rev, with_b))
        if with_b:
            # the power-law optimum is feasible for the DGBD, so the 3-parameter
            # fit can never end with a larger residual than the 2-parameter one
            pl = _regression_fit(s, space, False, None)
            starts.append(np.array([math.log(pl.params["A"]), pl.params["a"], 0.0]))
    nonneg = np.array([False, True] + ([True] if with_b else []))

    best = None
    for t0 in starts:
        out = levenberg_marquardt(residual, jacobian, t0, nonneg)
        if best is None or out[1] < best[1]:
            best = out
    theta, rss, iters, converged, _ = best
    target = y if space == "log" else x
    exact = rss <= RSS_ROUNDING * float(target @ target)
    if exact:
        rss = 0.0
    params = {"A": float(math.exp(theta[0])), "a": float(theta[1])}
    if with_b:
        params["b"] = float(theta[2])
    rep = FitReport(model, params, float(rss), n_params, N, space, bool(converged), int(iters))
    if not converged:
        rep.messages.append(f"Levenberg-Marquardt stopped after {iters} iterations")
    if exact:
        rep.messages.append("residuals at rounding level; rss set to 0")
    return rep


def fit_dgbd(sample, space="log", init=None):
    """Fit ``x_r = A (N+1-r)^b / r^a`` to a ranked sample.

    ``init`` (a :class:`DgbdParams`) overrides the ordinary-least-squares
    start computed on log sizes.
    """
    return _regression_fit(sample, space, True, init)


def fit_power_law(sample, space="log", init=None):
    """Fit ``x_r = A / r^a``; the DGBD fit with ``b`` pinned at 0."""
    return _regression_fit(sample, space, False, init)


def fit_lognormal(observations):
    """Mean and standard deviation of log values.

    ``sigma`` uses the sample convention (``ddof=1``). The report's ``rss``
    field holds the negative log-likelihood of the observations under the
    fitted lognormal (``rss_is_nll`` is set).
    """
    x = observations.values if isinstance(observations, RankedSample) else \
        rank_sample(observations).values
    z = np.log(x)
    n = z.size
    mu = float(z.mean())
    sigma = float(z.std(ddof=1)) if np.ptp(z) > 0 else 0.0
    if sigma == 0.0:
        return FitReport("lognormal", {"mu": mu, "sigma": 0.0}, -math.inf, 2, n, "log",
                         True, 0, degenerate=True, rss_is_nll=True,
                         messages=["zero variance of log values"])
    nll = float(np.sum(z) + n * math.log(sigma) + 0.5 * n * math.log(2 * math.pi)
                + np.sum((z - mu) ** 2) / (2 * sigma ** 2))
    return FitReport("lognormal", {"mu": mu, "sigma": sigma}, nll, 2, n, "log",
                     True, 0, rss_is_nll=True)


def qq_log_data(observations, params=None):
    """Normal q-q pairs for the standardized log observations.

    Returns an ``(n, 2)`` array of (theoretical standard-normal quantile at
    ``(i - 0.5)/n``, sorted ``(log x - mu)/sigma``). ``params=(mu, sigma)``
    overrides the fitted values.
    """
    x = observations.values if isinstance(observations, RankedSample) else \
        rank_sample(observations).values
    if params is None:
        fit = fit_lognormal(x)
        if fit.degenerate:
            raise InsufficientDataError("zero variance of log values; q-q plot undefined")
        mu, sigma = fit.params["mu"], fit.params["sigma"]
    else:
        mu, sigma = params
    n = x.size
    theo = stats.norm.ppf((np.arange(1, n + 1) - 0.5) / n)
    emp = np.sort((np.log(x) - mu) / sigma)
    return np.column_stack([theo, emp])
