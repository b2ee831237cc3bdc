"""Node covariates (population, marginalization, distance to center) and their
association with regime membership.

Two tests are offered: the independent-samples rank-sum test (Mann-Whitney U)
comparing the high and low groups, and a logistic regression of the regime
label on one regressor, fitted by iteratively reweighted least squares.
"""
import csv
from dataclasses import dataclass, field
from itertools import combinations
import math
from pathlib import Path

import numpy as np
from scipy import special, stats

from .errors import IngestionError, UsageError
from .model_selection import format_pvalue

MARGINALIZATION_LEVELS = ("very_low", "low", "medium", "high", "very_high")
REGRESSORS = ("population", "distance", "marginalization")
ALTERNATIVES = ("two-sided", "greater", "less")
EXACT_MAX_N = 12
IRLS_TOL = 1e-8
IRLS_MAX_ITER = 100
MAX_HALVINGS = 40

# English and Spanish labels as they appear in the official tables
_MARG_ALIASES = {
    "very low": "very_low", "muy bajo": "very_low",
    "low": "low", "bajo": "low",
    "medium": "medium", "medio": "medium",
    "high": "high", "alto": "high",
    "very high": "very_high", "muy alto": "very_high",
}


def parse_marginalization(raw):
    """Canonical level name for a label such as ``"Muy alto"`` or ``"very_high"``, or a score 1-5."""
    text = str(raw).strip().lower().replace("_", " ")
    text = " ".join(text.split())
    if text in _MARG_ALIASES:
        return _MARG_ALIASES[text]
    if text in {"1", "2", "3", "4", "5"}:
        return MARGINALIZATION_LEVELS[int(text) - 1]
    raise ValueError(f"unknown marginalization level {raw!r}")


def marginalization_score(level):
    """Ordinal score: very_low = 1 up to very_high = 5."""
    return MARGINALIZATION_LEVELS.index(level) + 1


@dataclass(frozen=True)
class CovariateRecord:
    node: str
    population: int = None
    marginalization: str = None
    centroid: tuple = None
    distance_to_center: float = None

    def value(self, regressor):
        if regressor == "population":
            return self.population
        if regressor == "distance":
            return self.distance_to_center
        if regressor == "marginalization":
            return None if self.marginalization is None else marginalization_score(self.marginalization)
        raise UsageError(f"regressor must be one of {REGRESSORS}, got {regressor!r}")


@dataclass
class CovariateConfig:
    """Column mapping for covariate files. A file needs the key column plus any subset of the rest."""

    key: str = "ageb"
    population: str = "population"
    marginalization: str = "marginalization"
    x: str = "x"
    y: str = "y"
    reference: tuple = (0.0, 0.0)
    delimiter: str = ","

    @classmethod
    def from_dict(cls, d):
        d = dict(d or {})
        if "reference" in d:
            d["reference"] = tuple(float(v) for v in d["reference"])
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise UsageError(f"unknown covariate config keys: {sorted(unknown)}")
        return cls(**d)


def _read_keyed(path, cfg):
    path = Path(path)
    with path.open(newline="", encoding="utf-8-sig") as fh:
        reader = csv.DictReader(fh, delimiter=cfg.delimiter)
        if reader.fieldnames is None:
            raise IngestionError("empty covariate file", path, 1)
        fields = [f.strip() for f in reader.fieldnames]
        reader.fieldnames = fields
        if cfg.key not in fields:
            raise IngestionError(f"missing key column {cfg.key!r}; header is {fields}", path, 1)
        rows, lines = {}, {}
        dupes = set()
        for lineno, row in enumerate(reader, start=2):
            k = (row.get(cfg.key) or "").strip()
            if not k:
                continue
            if k in rows:
                dupes.add(k)
            rows[k] = row
            lines[k] = lineno
    if dupes:
        raise IngestionError(f"duplicate keys in covariate file: {sorted(dupes)}", path)
    return fields, rows, lines


def load_covariates(paths, config=None):
    """Read one or more covariate files and merge them on the key column.

    Each file contributes whichever of population, marginalization and
    centroid (x and y together) columns it carries. Distance to center is
    the planar Euclidean distance from the centroid to ``config.reference``.
    Returns ``{node: CovariateRecord}``.
    """
    cfg = config if isinstance(config, CovariateConfig) else CovariateConfig.from_dict(config)
    if isinstance(paths, (str, Path)):
        paths = [paths]
    merged = {}
    for path in paths:
        fields, rows, lines = _read_keyed(path, cfg)
        for k, row in rows.items():
            rec = merged.setdefault(k, {})
            try:
                if cfg.population in fields and row[cfg.population].strip():
                    pop = float(row[cfg.population])
                    if pop < 0 or pop != int(pop):
                        raise ValueError(f"population must be a non-negative integer, got {row[cfg.population]!r}")
                    rec["population"] = int(pop)
                if cfg.marginalization in fields and row[cfg.marginalization].strip():
                    rec["marginalization"] = parse_marginalization(row[cfg.marginalization])
                if cfg.x in fields and cfg.y in fields and row[cfg.x].strip() and row[cfg.y].strip():
                    rec["centroid"] = (float(row[cfg.x]), float(row[cfg.y]))
            except ValueError as exc:
                raise IngestionError(str(exc), path, lines[k]) from None
    rx, ry = cfg.reference
    out = {}
    for k in sorted(merged):
        rec = merged[k]
        c = rec.get("centroid")
        dist = None if c is None else math.hypot(c[0] - rx, c[1] - ry)
        out[k] = CovariateRecord(k, rec.get("population"), rec.get("marginalization"), c, dist)
    return out


@dataclass(frozen=True)
class JoinReport:
    n_matched: int
    unmatched_covariates: list
    unmatched_nodes: list

    def to_dict(self):
        return {"n_matched": self.n_matched,
                "n_unmatched_covariates": len(self.unmatched_covariates),
                "n_unmatched_nodes": len(self.unmatched_nodes),
                "unmatched_nodes": list(self.unmatched_nodes)}


def join_report(covariates, nodes):
    cov_keys, node_keys = set(covariates), {str(n) for n in nodes}
    return JoinReport(len(cov_keys & node_keys), sorted(cov_keys - node_keys), sorted(node_keys - cov_keys))


@dataclass
class AssociationReport:
    test: str
    regressor: str
    statistic: float
    p_value: float
    direction: str = "n/a"
    method: str = ""
    alternative: str = "two-sided"
    n_high: int = 0
    n_low: int = 0
    coefficients: dict = field(default_factory=dict)
    deviance: float = None
    deviance_history: list = field(default_factory=list)
    iterations: int = 0
    converged: bool = True
    separation: bool = False
    messages: list = field(default_factory=list)

    @property
    def p_display(self):
        return "nan" if math.isnan(self.p_value) else format_pvalue(self.p_value)

    def to_dict(self):
        d = dict(self.__dict__)
        d["p_display"] = self.p_display
        d["coefficients"] = {k: dict(v) for k, v in self.coefficients.items()}
        d["deviance_history"] = list(self.deviance_history)
        d["messages"] = list(self.messages)
        return d


# ---------------------------------------------------------------- rank-sum


def _exact_rank_sum_tails(ranks, n1, observed):
    """P(R1 >= observed) and P(R1 <= observed) over all equally likely group assignments.

    Midranks are multiples of 1/2, so sums are compared on the doubled integer scale.
    """
    doubled = np.rint(2 * np.asarray(ranks)).astype(np.int64)
    obs2 = int(round(2 * observed))
    sums = np.fromiter((sum(c) for c in combinations(doubled.tolist(), n1)), dtype=np.int64)
    total = sums.size
    return np.count_nonzero(sums >= obs2) / total, np.count_nonzero(sums <= obs2) / total


def rank_sum_test(group_high, group_low, alternative="two-sided", method="auto", regressor=""):
    """Wilcoxon rank-sum (Mann-Whitney U) test of ``group_high`` against ``group_low``.

    Ties get midranks. ``method="auto"`` enumerates the exact permutation
    distribution when ``n1 + n2 <= 12`` and otherwise uses the normal
    approximation with tie and continuity corrections. ``"greater"`` tests
    whether the high group is stochastically larger. The statistic is U of
    the high group.
    """
    if alternative not in ALTERNATIVES:
        raise UsageError(f"alternative must be one of {ALTERNATIVES}, got {alternative!r}")
    if method not in ("auto", "exact", "normal"):
        raise UsageError(f"method must be auto, exact or normal, got {method!r}")
    x = np.asarray(group_high, dtype=np.float64).ravel()
    y = np.asarray(group_low, dtype=np.float64).ravel()
    if x.size == 0 or y.size == 0:
        raise UsageError("both groups need at least one value")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise UsageError("rank-sum input contains non-finite values")
    n1, n2 = x.size, y.size
    n = n1 + n2
    ranks = stats.rankdata(np.concatenate([x, y]))
    r1 = float(ranks[:n1].sum())
    u = r1 - n1 * (n1 + 1) / 2.0
    mean_u = n1 * n2 / 2.0
    if method == "auto":
        method = "exact" if n <= EXACT_MAX_N else "normal"

    if method == "exact":
        p_greater, p_less = _exact_rank_sum_tails(ranks, n1, r1)
    else:
        _, counts = np.unique(ranks, return_counts=True)
        tie_term = float(np.sum(counts ** 3 - counts)) / (n * (n - 1)) if n > 1 else 0.0
        var = n1 * n2 / 12.0 * ((n + 1) - tie_term)
        if var <= 0:
            p_greater = p_less = 1.0
        else:
            sd = math.sqrt(var)
            p_greater = float(stats.norm.sf((u - mean_u - 0.5) / sd))
            p_less = float(stats.norm.cdf((u - mean_u + 0.5) / sd))
    p = {"greater": p_greater, "less": p_less,
         "two-sided": min(1.0, 2.0 * min(p_greater, p_less))}[alternative]
    if u > mean_u:
        direction = "high_shifted_right"
    elif u < mean_u:
        direction = "high_shifted_left"
    else:
        direction = "n/a"
    return AssociationReport("rank_sum", regressor, u, min(max(p, 0.0), 1.0), direction,
                             method, alternative, n1, n2)


# ---------------------------------------------------------------- logistic


def _deviance(y, eta):
    # -2 log-likelihood, written with logaddexp so extreme eta stays finite
    return float(2.0 * np.sum(np.logaddexp(0.0, eta) - y * eta))


def irls(X, y, tol=IRLS_TOL, max_iter=IRLS_MAX_ITER):
    """Maximum-likelihood logistic coefficients by IRLS with step halving.

    A Newton step that would raise the deviance is halved until it does not,
    so the recorded deviance history never increases. Stops when the largest
    coefficient change is below ``tol``.

    Returns ``(beta, information_matrix, deviance_history, iterations, converged)``.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    beta = np.zeros(X.shape[1])
    ybar = y.mean()
    beta[0] = math.log(ybar / (1 - ybar))
    eta = X @ beta
    dev = _deviance(y, eta)
    history = [dev]
    converged = False
    it = 0
    while it < max_iter:
        it += 1
        p = special.expit(eta)
        w = p * (1 - p)
        info = X.T @ (w[:, None] * X)
        try:
            step = np.linalg.solve(info, X.T @ (y - p))
        except np.linalg.LinAlgError:
            break
        for _ in range(MAX_HALVINGS):
            cand = beta + step
            eta_c = X @ cand
            dev_c = _deviance(y, eta_c)
            if dev_c <= dev:
                break
            step = step / 2.0
        else:
            converged = True   # no descent left at float resolution
            break
        beta, eta, dev = cand, eta_c, dev_c
        history.append(dev)
        if np.max(np.abs(step)) < tol:
            converged = True
            break
    p = special.expit(eta)
    info = X.T @ ((p * (1 - p))[:, None] * X)
    return beta, info, history, it, converged


def _design(values, encoding):
    """Design matrix (with intercept), column names, and the back-transform to raw units."""
    if encoding == "ordinal":
        x = np.asarray(values, dtype=np.float64)
        center = float(x.mean())
        scale = float(x.std())
        if scale == 0:
            raise UsageError("regressor is constant; slope not identifiable")
        X = np.column_stack([np.ones_like(x), (x - center) / scale])
        # beta_raw = T @ beta_std
        T = np.array([[1.0, -center / scale], [0.0, 1.0 / scale]])
        return X, ["intercept", "slope"], T
    if encoding == "onehot":
        levels = sorted(set(values.tolist() if isinstance(values, np.ndarray) else values))
        if len(levels) < 2:
            raise UsageError("one-hot encoding needs at least two regressor levels")
        cols = [np.ones(len(values))]
        names = ["intercept"]
        for lev in levels[1:]:
            cols.append(np.array([v == lev for v in values], dtype=np.float64))
            names.append(f"level_{lev}")
        return np.column_stack(cols), names, np.eye(len(names))
    raise UsageError(f"encoding must be ordinal or onehot, got {encoding!r}")


def logistic_fit(labels, regressor, encoding="ordinal", regressor_name=""):
    """Logistic regression of a binary label on one regressor.

    ``encoding="ordinal"`` uses the regressor as a single numeric column
    (marginalization as its 1-5 score); ``"onehot"`` makes one dummy per
    level beyond the lowest. The numeric column is standardized for the
    iterations and coefficients are reported in the regressor's own units.
    ``statistic`` is the Wald z of the slope (ordinal) or the likelihood
    ratio against the intercept-only model (one-hot).

    Complete or quasi-complete separation drives coefficients to infinity;
    it is flagged and the p-values are set to nan.
    """
    y = np.asarray(labels).astype(np.float64).ravel()
    if y.size < 10:
        raise UsageError(f"logistic fit needs at least 10 labeled nodes, got {y.size}")
    if not np.all((y == 0) | (y == 1)):
        raise UsageError("labels must be binary")
    if y.min() == y.max():
        raise UsageError("labels contain a single class")
    values = np.asarray(regressor) if encoding == "onehot" else np.asarray(regressor, dtype=np.float64)
    if values.shape[0] != y.size:
        raise UsageError("labels and regressor differ in length")
    X, names, T = _design(values, encoding)
    beta_s, info, history, iters, converged = irls(X, y)
    eta = X @ beta_s
    dev = history[-1]
    messages = []
    # under separation the likelihood has no maximum: IRLS keeps stepping outward
    separation = dev < 1e-6 * y.size or (not converged and float(np.max(np.abs(eta))) > 15.0)
    beta = T @ beta_s
    try:
        cov = T @ np.linalg.inv(info) @ T.T
        with np.errstate(invalid="ignore"):
            # a numerically singular information matrix can give tiny negative variances
            se = np.sqrt(np.diag(cov))
    except np.linalg.LinAlgError:
        se = np.full(beta.size, np.nan)
        separation = True
    if separation:
        messages.append("separation: the label is (almost) perfectly predicted; "
                        "coefficients diverge and Wald inference is not reported")
    coefs = {}
    for i, name in enumerate(names):
        z = beta[i] / se[i] if se[i] > 0 else np.nan
        p = np.nan if separation else float(2 * stats.norm.sf(abs(z)))
        coefs[name] = {"estimate": float(beta[i]), "se": float(se[i]), "z": float(z), "p_value": p}

    null_dev = _deviance(y, np.full(y.size, math.log(y.mean() / (1 - y.mean()))))
    lr = null_dev - dev
    if encoding == "ordinal":
        statistic = coefs["slope"]["z"]
        p_value = coefs["slope"]["p_value"]
        slope = coefs["slope"]["estimate"]
        direction = "high_shifted_right" if slope > 0 else "high_shifted_left" if slope < 0 else "n/a"
    else:
        statistic = float(lr)
        p_value = np.nan if separation else float(stats.chi2.sf(max(lr, 0.0), len(names) - 1))
        direction = "n/a"
    if not converged and not separation:
        messages.append(f"IRLS stopped after {iters} iterations without meeting the step tolerance")
    return AssociationReport(
        "logistic", regressor_name, float(statistic), float(p_value), direction,
        f"irls/{encoding}", "two-sided", int(y.sum()), int(y.size - y.sum()), coefs,
        dev, history, iters, converged, bool(separation), messages)


def association_tests(partition, covariates, regressors=REGRESSORS, encoding="ordinal"):
    """Rank-sum and logistic tests of one day's regime labels against each regressor.

    Nodes without the covariate value are left out of that regressor's tests.
    Returns ``(reports, join)``; a test that cannot run is reported with its
    error in ``messages`` and nan statistics.
    """
    assignments = partition.assignments
    join = join_report(covariates, assignments)
    reports = []
    for reg in regressors:
        hi, lo, labels, vals = [], [], [], []
        for node in sorted(assignments):
            rec = covariates.get(str(node))
            v = None if rec is None else rec.value(reg)
            if v is None:
                continue
            is_high = assignments[node] == "high"
            (hi if is_high else lo).append(v)
            labels.append(int(is_high))
            vals.append(v)
        for kind in ("rank_sum", "logistic"):
            try:
                if kind == "rank_sum":
                    rep = rank_sum_test(hi, lo, regressor=reg)
                else:
                    rep = logistic_fit(labels, vals, encoding if reg == "marginalization" else "ordinal", reg)
            except UsageError as exc:
                rep = AssociationReport(kind, reg, math.nan, math.nan, n_high=len(hi), n_low=len(lo),
                                        converged=False, messages=[str(exc)])
            reports.append(rep)
    return reports, join
