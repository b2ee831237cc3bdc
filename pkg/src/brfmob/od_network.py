"""Daily origin-destination networks: ingestion and node centralities."""
import csv
from dataclasses import dataclass, field
import datetime as dt
from pathlib import Path

import numpy as np

from . import kernels
from .errors import IngestionError, UsageError

METRICS = ("degree", "strength")
CENTRALITY_FIELDS = ("in_degree", "out_degree", "total_degree",
                     "in_strength", "out_strength", "total_strength")
DEFAULT_COLUMNS = {"source": "source", "target": "target", "weight": "weight"}


def _as_date(date):
    if date is None or isinstance(date, dt.date):
        return date
    return dt.date.fromisoformat(str(date))


@dataclass(frozen=True)
class DailyNetwork:
    """Directed weighted network of one day.

    Nodes are opaque string identifiers kept in sorted order; edges are stored
    as parallel integer arrays indexing into ``nodes``. Each ordered pair
    appears at most once.
    """

    date: dt.date
    nodes: np.ndarray
    src: np.ndarray
    dst: np.ndarray
    weight: np.ndarray
    n_merged: int = 0
    n_malformed: int = 0
    meta: dict = field(default_factory=dict)

    @classmethod
    def from_edges(cls, date, edges, isolated=(), n_malformed=0):
        """Build from ``(source, target, weight)`` triples, summing duplicate pairs."""
        edges = list(edges)
        for s, t, w in edges:
            if int(w) != w or w < 1:
                raise IngestionError(f"edge weight must be a positive integer, got {w!r} on {s}->{t}")
        src_ids = [str(e[0]) for e in edges]
        dst_ids = [str(e[1]) for e in edges]
        w = np.array([int(e[2]) for e in edges], dtype=np.int64)
        return cls._from_arrays(date, src_ids, dst_ids, w, isolated, n_malformed)

    @classmethod
    def _from_arrays(cls, date, src_ids, dst_ids, w, isolated=(), n_malformed=0):
        all_ids = np.unique(np.concatenate([np.asarray(src_ids, dtype=str),
                                            np.asarray(dst_ids, dtype=str),
                                            np.asarray(list(isolated), dtype=str)]))
        nodes = all_ids.astype(object)
        if len(src_ids) == 0:
            empty = np.zeros(0, dtype=np.int64)
            return cls(_as_date(date), nodes, empty, empty, empty, 0, n_malformed)
        si = np.searchsorted(all_ids, np.asarray(src_ids, dtype=str))
        di = np.searchsorted(all_ids, np.asarray(dst_ids, dtype=str))
        n = all_ids.size
        key = si.astype(np.int64) * n + di
        uniq, inverse = np.unique(key, return_inverse=True)
        merged = np.bincount(inverse, weights=w, minlength=uniq.size)
        return cls(
            date=_as_date(date),
            nodes=nodes,
            src=(uniq // n).astype(np.int64),
            dst=(uniq % n).astype(np.int64),
            weight=np.rint(merged).astype(np.int64),
            n_merged=int(key.size - uniq.size),
            n_malformed=int(n_malformed),
        )

    @property
    def n_nodes(self):
        return int(self.nodes.size)

    @property
    def n_edges(self):
        return int(self.src.size)

    @property
    def n_self_loops(self):
        return int(np.count_nonzero(self.src == self.dst))

    def edges(self):
        for s, d, w in zip(self.src, self.dst, self.weight):
            yield self.nodes[s], self.nodes[d], int(w)


def load_edgelist(path, columns=None, date=None, delimiter=","):
    """Read a delimited edgelist with a header row.

    ``columns`` maps the roles ``source``, ``target``, ``weight`` to header
    names. Blank lines are ignored; rows with missing fields are skipped and
    counted in ``n_malformed``; a non-numeric or non-positive weight is an error.
    """
    path = Path(path)
    cols = dict(DEFAULT_COLUMNS, **(columns or {}))
    src_ids, dst_ids, weights = [], [], []
    n_malformed = 0
    with path.open(newline="", encoding="utf-8-sig") as fh:
        reader = csv.reader(fh, delimiter=delimiter)
        header = next(reader, None)
        if header is None:
            raise IngestionError("empty file", path, 1)
        header = [h.strip() for h in header]
        try:
            idx = [header.index(cols[k]) for k in ("source", "target", "weight")]
        except ValueError:
            missing = [cols[k] for k in ("source", "target", "weight") if cols[k] not in header]
            raise IngestionError(f"missing column(s) {missing}; header is {header}", path, 1) from None
        width = max(idx) + 1
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) < width or any(not row[i].strip() for i in idx):
                n_malformed += 1
                continue
            raw_w = row[idx[2]].strip()
            try:
                w = float(raw_w)
            except ValueError:
                raise IngestionError(f"non-numeric weight {raw_w!r}", path, lineno) from None
            if not (w >= 1 and w == int(w)):
                raise IngestionError(f"weight must be a positive integer, got {raw_w!r}", path, lineno)
            src_ids.append(row[idx[0]].strip())
            dst_ids.append(row[idx[1]].strip())
            weights.append(int(w))
    if not src_ids:
        raise IngestionError("no edges in file", path)
    net = DailyNetwork._from_arrays(date, src_ids, dst_ids, np.asarray(weights, dtype=np.int64),
                                    n_malformed=n_malformed)
    net.meta["path"] = str(path)
    return net


def write_edgelist(net, path, columns=None, delimiter=","):
    cols = dict(DEFAULT_COLUMNS, **(columns or {}))
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, delimiter=delimiter, lineterminator="\n")
        w.writerow([cols["source"], cols["target"], cols["weight"]])
        for s, d, wt in net.edges():
            w.writerow([s, d, wt])


@dataclass(frozen=True)
class NodeCentrality:
    node: str
    in_degree: int
    out_degree: int
    total_degree: int
    in_strength: int
    out_strength: int
    total_strength: int


@dataclass(frozen=True)
class CentralityTable:
    """Per-node centralities as parallel arrays, indexed like ``nodes``."""

    nodes: np.ndarray
    in_degree: np.ndarray
    out_degree: np.ndarray
    in_strength: np.ndarray
    out_strength: np.ndarray
    date: dt.date = None

    @property
    def total_degree(self):
        return self.in_degree + self.out_degree

    @property
    def total_strength(self):
        return self.in_strength + self.out_strength

    def metric(self, metric, direction="total"):
        if metric not in METRICS:
            raise UsageError(f"metric must be one of {METRICS}, got {metric!r}")
        if direction not in ("in", "out", "total"):
            raise UsageError(f"direction must be in, out or total, got {direction!r}")
        return getattr(self, f"{direction}_{metric}")

    def as_dict(self, metric):
        return dict(zip(self.nodes.tolist(), self.metric(metric).tolist()))

    def __len__(self):
        return int(self.nodes.size)

    def __iter__(self):
        td, ts = self.total_degree, self.total_strength
        for i, node in enumerate(self.nodes):
            yield NodeCentrality(node, int(self.in_degree[i]), int(self.out_degree[i]), int(td[i]),
                                 int(self.in_strength[i]), int(self.out_strength[i]), int(ts[i]))

    def to_csv(self, path):
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("node",) + CENTRALITY_FIELDS)
            for c in self:
                w.writerow([c.node, c.in_degree, c.out_degree, c.total_degree,
                            c.in_strength, c.out_strength, c.total_strength])

    @classmethod
    def from_csv(cls, path, date=None):
        with Path(path).open(newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
        if not rows:
            raise IngestionError("empty centrality table", path)
        try:
            arr = {f: np.array([int(r[f]) for r in rows], dtype=np.int64)
                   for f in ("in_degree", "out_degree", "in_strength", "out_strength")}
        except (KeyError, ValueError) as exc:
            raise IngestionError(f"bad centrality table: {exc}", path) from None
        nodes = np.array([r["node"] for r in rows], dtype=object)
        return cls(nodes, arr["in_degree"], arr["out_degree"], arr["in_strength"],
                   arr["out_strength"], _as_date(date))


def centralities(net, include_self_loops=False):
    """In/out/total degree and strength of every node.

    Degrees count distinct neighbours. Self-loops are left out by default;
    with ``include_self_loops`` a loop adds one to both in- and out-degree
    and its weight to both strengths.
    """
    keep = np.ones(net.n_edges, dtype=bool) if include_self_loops else net.src != net.dst
    in_deg, out_deg, in_str, out_str = kernels.accumulate_centralities(
        net.src[keep], net.dst[keep], net.weight[keep], net.n_nodes)
    return CentralityTable(net.nodes, in_deg, out_deg, in_str, out_str, net.date)


@dataclass(frozen=True)
class InOutDiagnostics:
    metric: str
    pearson_r: float
    r_squared: float
    slope: float
    intercept: float
    n: int
    undefined: bool = False

    def to_dict(self):
        return dict(self.__dict__)


def linear_diagnostics(x_in, x_out, metric=""):
    """Pearson correlation and the least-squares line ``in = slope * out + intercept``."""
    x_in = np.asarray(x_in, dtype=np.float64)
    x_out = np.asarray(x_out, dtype=np.float64)
    n = x_in.size
    if n < 3:
        raise UsageError(f"need at least 3 nodes for in/out diagnostics, got {n}")
    dx = x_out - x_out.mean()
    dy = x_in - x_in.mean()
    sxx, syy, sxy = dx @ dx, dy @ dy, dx @ dy
    if sxx == 0 or syy == 0:
        return InOutDiagnostics(metric, np.nan, np.nan, np.nan, np.nan, n, undefined=True)
    r = float(np.clip(sxy / np.sqrt(sxx * syy), -1.0, 1.0))
    slope = float(sxy / sxx)
    intercept = float(x_in.mean() - slope * x_out.mean())
    return InOutDiagnostics(metric, r, r * r, slope, intercept, n)


def in_out_diagnostics(cents, metric):
    """In vs out correlation for ``metric``, over nodes with non-zero in or out value."""
    x_in = cents.metric(metric, "in")
    x_out = cents.metric(metric, "out")
    active = (x_in > 0) | (x_out > 0)
    return linear_diagnostics(x_in[active], x_out[active], metric)


def in_out_difference(cents, metric):
    """``(node, in - out)`` pairs sorted by decreasing absolute difference, then node id."""
    diff = cents.metric(metric, "in") - cents.metric(metric, "out")
    pairs = [(node, int(d)) for node, d in zip(cents.nodes.tolist(), diff.tolist())]
    pairs.sort(key=lambda p: (-abs(p[1]), p[0]))
    return pairs
