"""Kolmogorov-Smirnov and AIC comparison of the BRF, power-law and lognormal fits."""
from dataclasses import dataclass, field
import math

import numpy as np

from .distributions import LogNormal, PowerLaw
from .errors import BrfmobError, InsufficientDataError, UsageError
from .fitting import fit_dgbd, fit_lognormal, fit_power_law, rank_sample

P_FLOOR = 2.2e-16
KS_SERIES_TOL = 1e-12
ESTIMATED_PARAMS_CAVEAT = ("parameters were estimated from the same sample; "
                           "KS p-values are anti-conservative")
CROSS_FAMILY_CAVEAT = ("lognormal AIC is likelihood based, regression AICs use the Gaussian "
                       "profile likelihood of rank-size residuals; compare within family only")


def ks_statistic(sample, model_cdf):
    """Exact sup-distance between the empirical CDF of ``sample`` and ``model_cdf``."""
    x = np.sort(np.asarray(sample, dtype=np.float64).ravel())
    n = x.size
    if n == 0:
        raise InsufficientDataError("KS statistic of an empty sample")
    F = np.asarray(model_cdf(x), dtype=np.float64)
    i = np.arange(1, n + 1)
    d_plus = np.max(i / n - F)
    d_minus = np.max(F - (i - 1) / n)
    return float(min(1.0, max(d_plus, d_minus, 0.0)))


def kolmogorov_sf(lam):
    """Tail ``Q(lam) = P(sqrt(n) D > lam)`` of the limiting Kolmogorov distribution.

    Uses ``2 sum (-1)^(k-1) exp(-2 k^2 lam^2)`` for ``lam >= 1`` and the
    Jacobi-transformed series ``1 - sqrt(2 pi)/lam sum exp(-(2k-1)^2 pi^2 / (8 lam^2))``
    below, each truncated once terms drop under 1e-12.
    """
    if lam <= 0:
        return 1.0
    if lam < 1.0:
        total = 0.0
        k = 1
        while True:
            term = math.exp(-((2 * k - 1) ** 2) * math.pi ** 2 / (8 * lam * lam))
            total += term
            if term < KS_SERIES_TOL:
                break
            k += 1
        return min(1.0, max(0.0, 1.0 - math.sqrt(2 * math.pi) / lam * total))
    total = 0.0
    k = 1
    while True:
        term = math.exp(-2.0 * k * k * lam * lam)
        total += term if k % 2 else -term
        if term < KS_SERIES_TOL:
            break
        k += 1
    return min(1.0, max(0.0, 2.0 * total))


def ks_pvalue(statistic, n):
    """Asymptotic p-value ``Q(sqrt(n) D)``; may underflow to 0, see :func:`format_pvalue`."""
    if not 0.0 <= statistic <= 1.0:
        raise UsageError(f"KS statistic must lie in [0, 1], got {statistic}")
    if n < 1:
        raise UsageError("sample size must be positive")
    return kolmogorov_sf(math.sqrt(n) * statistic)


def format_pvalue(p):
    return f"< {P_FLOOR:.1e}" if p < P_FLOOR else f"{p:.4g}"


def aic(fit, n=None):
    """Akaike information criterion of a fit.

    Rank-size regressions use the Gaussian profile likelihood of the
    residuals, ``n log(rss/n) + 2k`` (additive constant dropped). The
    lognormal fit uses ``2 NLL + 2k``. A perfect regression (``rss = 0``)
    gives ``-inf``.
    """
    n = fit.n if n is None else n
    k = fit.n_params
    if fit.rss_is_nll:
        return 2.0 * fit.rss + 2.0 * k
    if fit.rss <= 0.0:
        return -math.inf
    return n * math.log(fit.rss / n) + 2.0 * k


@dataclass
class ModelScore:
    ks_statistic: float
    ks_pvalue: float
    aic: float

    def to_dict(self):
        return {"ks_statistic": self.ks_statistic, "ks_pvalue": self.ks_pvalue,
                "ks_pvalue_display": format_pvalue(self.ks_pvalue), "aic": self.aic}


@dataclass
class ComparisonVerdict:
    per_model: dict
    fits: dict
    delta_aic_brf_vs_powerlaw: float
    best_by_ks: str
    best_by_aic: str
    n: int
    fit_space: str
    label: str = ""
    errors: dict = field(default_factory=dict)
    caveats: list = field(default_factory=lambda: [ESTIMATED_PARAMS_CAVEAT, CROSS_FAMILY_CAVEAT])

    def to_dict(self):
        return {
            "label": self.label,
            "n": self.n,
            "fit_space": self.fit_space,
            "per_model": {m: s.to_dict() for m, s in self.per_model.items()},
            "fits": {m: f.to_dict() for m, f in self.fits.items()},
            "delta_aic_brf_vs_powerlaw": self.delta_aic_brf_vs_powerlaw,
            "best_by_ks": self.best_by_ks,
            "best_by_aic": self.best_by_aic,
            "errors": dict(self.errors),
            "caveats": list(self.caveats),
        }


def model_cdf(fit):
    """Continuous CDF implied by a fit, as a callable on raw observations."""
    if fit.model == "lognormal":
        return LogNormal(fit.params["mu"], fit.params["sigma"]).cdf
    q = fit.dgbd().to_brf()
    if fit.model == "power_law":
        return PowerLaw(q.A, q.a).cdf
    return q.cdf


def compare_models(observations, space="log", label=""):
    """Fit all three models and score them by KS statistic and AIC.

    ``best_by_aic`` is decided between BRF and power law only, whose AICs
    share a likelihood basis; the lognormal AIC is reported alongside.
    """
    sample = rank_sample(observations, label=label)
    if sample.N < 10:
        raise InsufficientDataError(f"model comparison needs at least 10 values, got {sample.N}")
    x = sample.values
    n = sample.N
    fits, scores, errors = {}, {}, {}
    fitters = (("brf", lambda: fit_dgbd(sample, space)),
               ("power_law", lambda: fit_power_law(sample, space)),
               ("lognormal", lambda: fit_lognormal(sample)))
    for name, fitter in fitters:
        try:
            fit = fitter()
            if name == "lognormal":
                if fit.degenerate:
                    raise InsufficientDataError("zero variance of log values")
                # on the log scale against the fitted normal; KS is invariant to the log map
                cdf_log = LogNormal(fit.params["mu"], fit.params["sigma"]).log_cdf
                d = ks_statistic(np.log(x), cdf_log)
            else:
                d = ks_statistic(x, model_cdf(fit))
            fits[name] = fit
            scores[name] = ModelScore(d, ks_pvalue(d, n), aic(fit, n))
        except (BrfmobError, np.linalg.LinAlgError, FloatingPointError) as exc:
            errors[name] = f"{type(exc).__name__}: {exc}"

    if not scores:
        raise InsufficientDataError(f"no model could be fitted: {errors}")
    best_ks = min(scores, key=lambda m: (scores[m].ks_statistic, m))
    regression = [m for m in ("brf", "power_law") if m in scores]
    best_aic = min(regression, key=lambda m: (scores[m].aic, m)) if regression else "lognormal"
    if "brf" in scores and "power_law" in scores:
        if scores["brf"].aic == scores["power_law"].aic == -math.inf:
            # two perfect fits have equal rss: only the parameter penalty differs
            delta = 2.0 * (fits["brf"].n_params - fits["power_law"].n_params)
        else:
            delta = scores["brf"].aic - scores["power_law"].aic
    else:
        delta = math.nan
    return ComparisonVerdict(scores, fits, delta, best_ks, best_aic, n, space, label, errors)
