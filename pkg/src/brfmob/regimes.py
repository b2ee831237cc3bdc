"""High/low mobility regimes around the distribution mode, and their bookkeeping over time."""
from collections import defaultdict
import csv
from dataclasses import dataclass, field
import datetime as dt
import math
from pathlib import Path
import warnings

import numpy as np

from . import kernels
from .distributions import brf_log_mode
from .errors import InsufficientDataError, UsageError
from .fitting import fit_dgbd, rank_sample
from .od_network import CentralityTable

MODE_METHODS = ("brf_fit", "empirical_kde")
KDE_MIN_OBS = 50
KDE_GRID = 2048
SHAPE_EPS = 1e-6
HIGH, LOW = "high", "low"


def _nodes_and_values(data, metric):
    if isinstance(data, CentralityTable):
        return np.asarray(data.nodes, dtype=object), np.asarray(data.metric(metric), dtype=np.float64)
    if isinstance(data, dict):
        nodes = sorted(data)
        return np.array(nodes, dtype=object), np.array([data[k] for k in nodes], dtype=np.float64)
    raise TypeError("expected a CentralityTable or a node -> value mapping")


def silverman_bandwidth(z):
    z = np.asarray(z, dtype=np.float64)
    sd = z.std(ddof=1)
    iqr = np.subtract(*np.percentile(z, [75, 25]))
    spread = min(sd, iqr / 1.34) if iqr > 0 else sd
    return 0.9 * spread * z.size ** (-0.2)


def empirical_kde_mode(values):
    """Mode (in the units of ``values``) of a Gaussian KDE over the log values."""
    x = np.asarray(values, dtype=np.float64)
    z = np.log(x[x > 0])
    if z.size < KDE_MIN_OBS:
        raise InsufficientDataError(f"KDE mode needs at least {KDE_MIN_OBS} positive values, got {z.size}")
    h = silverman_bandwidth(z)
    if not h > 0:
        return float(np.exp(np.median(z)))
    grid = np.linspace(z.min() - 3 * h, z.max() + 3 * h, KDE_GRID)
    dens = kernels.kde_grid(z, grid, h)
    i = int(np.argmax(dens))
    step = grid[1] - grid[0]
    fine = np.linspace(grid[i] - step, grid[i] + step, 201)
    dens_fine = kernels.kde_grid(z, fine, h)
    return float(np.exp(fine[int(np.argmax(dens_fine))]))


def brf_fit_mode(values, fit_space="log", fit=None):
    """Mode of the BRF fitted to ``values``; ``(mode_value, fit_report)``.

    A DGBD ``fit`` already computed for these values is reused. Raises
    ``UsageError`` when the fitted shape has no interior peak.
    """
    if fit is None:
        fit = fit_dgbd(rank_sample(values), fit_space)
    p = fit.dgbd()
    if p.a < SHAPE_EPS or p.b < SHAPE_EPS:
        raise UsageError(f"fitted BRF has no interior mode (a={p.a:.3g}, b={p.b:.3g})")
    _, z_star = brf_log_mode(p.to_brf())
    return math.exp(z_star), fit


@dataclass(frozen=True)
class RegimePartition:
    date: dt.date
    metric: str
    mode_value: float
    mode_method: str
    nodes: np.ndarray
    values: np.ndarray
    high: np.ndarray
    notes: tuple = ()

    @property
    def assignments(self):
        return {n: (HIGH if h else LOW) for n, h in zip(self.nodes.tolist(), self.high.tolist())}

    @property
    def n_high(self):
        return int(self.high.sum())

    @property
    def n_low(self):
        return int(self.high.size - self.high.sum())

    def to_csv(self, path):
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["node", "metric", "label", "mode_value", "value"])
            for n, v, h in zip(self.nodes.tolist(), self.values.tolist(), self.high.tolist()):
                w.writerow([n, self.metric, HIGH if h else LOW, repr(self.mode_value), repr(v)])

    @classmethod
    def from_csv(cls, path, date=None, mode_method="brf_fit"):
        with Path(path).open(newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
        if not rows:
            raise InsufficientDataError(f"empty partition file {path}")
        metric = rows[0]["metric"]
        date = dt.date.fromisoformat(str(date)) if isinstance(date, str) else date
        return cls(date, metric, float(rows[0]["mode_value"]), mode_method,
                   np.array([r["node"] for r in rows], dtype=object),
                   np.array([float(r["value"]) for r in rows]),
                   np.array([r["label"] == HIGH for r in rows]))


def partition_by_threshold(nodes, values, mode_value, metric, date=None, mode_method="brf_fit", notes=()):
    """Label ``high`` where value > mode_value (ties go to ``low``)."""
    values = np.asarray(values, dtype=np.float64)
    return RegimePartition(date, metric, float(mode_value), mode_method,
                           np.asarray(nodes, dtype=object), values, values > mode_value, tuple(notes))


def classify_regimes(data, metric, mode_method="brf_fit", fit_space="log", date=None, fit=None):
    """Split the nodes of one day into high and low regimes at the distribution mode.

    ``brf_fit`` uses the analytic peak of the fitted BRF; when the fit has no
    interior peak it falls back to ``empirical_kde`` with a warning.
    """
    if mode_method not in MODE_METHODS:
        raise UsageError(f"mode method must be one of {MODE_METHODS}, got {mode_method!r}")
    nodes, values = _nodes_and_values(data, metric)
    if date is None and isinstance(data, CentralityTable):
        date = data.date
    notes = []
    if mode_method == "brf_fit":
        try:
            mode_value, _ = brf_fit_mode(values, fit_space, fit)
        except UsageError as exc:
            msg = f"{exc}; falling back to empirical_kde"
            warnings.warn(msg, RuntimeWarning, stacklevel=2)
            notes.append(msg)
            mode_method = "empirical_kde"
    if mode_method == "empirical_kde":
        mode_value = empirical_kde_mode(values)
    return partition_by_threshold(nodes, values, mode_value, metric, date, mode_method, notes)


def switching_nodes(p1, p2):
    """Nodes present on both days whose label changed, as ``(node, from, to)`` sorted by node."""
    if p1.metric != p2.metric:
        raise UsageError(f"cannot compare a {p1.metric} partition with a {p2.metric} partition")
    a, b = p1.assignments, p2.assignments
    return sorted((n, a[n], b[n]) for n in a.keys() & b.keys() if a[n] != b[n])


@dataclass
class ConcordanceReport:
    per_day: dict
    pooled: float
    per_node_mean: float
    discordant_days: dict
    days_observed: dict
    persistent: list
    threshold_days: int
    n_pairs: int = 0

    def to_dict(self):
        return {
            "pooled": self.pooled,
            "per_node_mean": self.per_node_mean,
            "n_pairs": self.n_pairs,
            "threshold_days": self.threshold_days,
            "n_persistent": len(self.persistent),
            "persistent": list(self.persistent),
            "per_day": {str(d): f for d, f in sorted(self.per_day.items())},
        }


def concordance(degree_partitions, strength_partitions, threshold_days=200):
    """Agreement between degree and strength labels, matched by date.

    ``pooled`` counts (node, day) pairs; ``per_node_mean`` averages each
    node's own agreement rate. A node is persistently discordant when its
    labels differ on more than ``threshold_days`` days.
    """
    deg = {p.date: p for p in degree_partitions}
    stren = {p.date: p for p in strength_partitions}
    for side in (deg, stren):
        if len({p.metric for p in side.values()}) > 1:
            raise UsageError("each side of a concordance must hold a single metric")
    days = sorted(deg.keys() & stren.keys(), key=str)
    if not days:
        raise UsageError("degree and strength partitions share no dates")
    per_day = {}
    disc = defaultdict(int)
    seen = defaultdict(int)
    agree_total = pairs_total = 0
    for d in days:
        a, b = deg[d].assignments, stren[d].assignments
        common = a.keys() & b.keys()
        if not common:
            continue
        agree = 0
        for n in common:
            seen[n] += 1
            if a[n] == b[n]:
                agree += 1
            else:
                disc[n] += 1
        per_day[d] = agree / len(common)
        agree_total += agree
        pairs_total += len(common)
    if pairs_total == 0:
        raise UsageError("no node carries both labels on any shared date")
    per_node = [1.0 - disc.get(n, 0) / k for n, k in seen.items()]
    persistent = sorted(n for n, k in disc.items() if k > threshold_days)
    return ConcordanceReport(per_day, agree_total / pairs_total, float(np.mean(per_node)),
                             dict(disc), dict(seen), persistent, threshold_days, pairs_total)


@dataclass
class HubRanking:
    month: str
    metric: str
    entries: list = field(default_factory=list)
    k: int = 0

    @property
    def nodes(self):
        return [n for n, _ in self.entries]

    def to_csv(self, path):
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["rank", "node", f"mean_{self.metric}", "month"])
            for i, (n, v) in enumerate(self.entries, start=1):
                w.writerow([i, n, repr(v), self.month])


def hub_ranking(days, metric, k, month=""):
    """Top ``k`` nodes by mean ``metric`` over the days they appear in.

    ``days`` holds CentralityTables or node -> value mappings. A node absent
    on a day contributes nothing that day (missing is not zero).
    """
    sums = defaultdict(float)
    counts = defaultdict(int)
    n_days = 0
    for day in days:
        n_days += 1
        nodes, values = _nodes_and_values(day, metric)
        for n, v in zip(nodes.tolist(), values.tolist()):
            sums[n] += v
            counts[n] += 1
    if n_days == 0:
        raise UsageError("hub ranking needs at least one day")
    means = sorted(((n, sums[n] / counts[n]) for n in sums), key=lambda e: (-e[1], e[0]))
    return HubRanking(month, metric, means[:k], k)


def monthly_hubs(tables, metric, k):
    """Hub rankings per calendar month, keyed ``YYYY-MM``; tables need a ``date``."""
    by_month = defaultdict(list)
    for t in tables:
        if t.date is None:
            raise UsageError("monthly hub ranking needs dated centrality tables")
        by_month[f"{t.date:%Y-%m}"].append(t)
    return {m: hub_ranking(ts, metric, k, m) for m, ts in sorted(by_month.items())}
