"""Batch analysis over a directory of daily edgelists.

Each day is analyzed independently (``run_day``) and its artifacts are
written to ``<output>/days/<date>/``. The batch then reduces the per-day
results in date order into time series, concordance, hub rankings, switching
sets and association tests under ``<output>/aggregate/``. Day tasks may run in
a process pool; since the reduction only starts once every day is done and
always walks dates in order, the files do not depend on the worker count.
"""
from concurrent.futures import ProcessPoolExecutor
import csv
from dataclasses import asdict, dataclass, field
import datetime as dt
import json
import math
import os
from pathlib import Path
import shutil
import tempfile
import warnings

import numpy as np

from .covariates import CovariateConfig, association_tests, load_covariates
from .distributions import DgbdParams, brf_log_density, brf_log_mode, dgbd_eval
from .errors import BatchError, BrfmobError, IngestionError, InsufficientDataError, UsageError
from .fitting import FIT_SPACES, qq_log_data, rank_sample
from .model_selection import compare_models
from .od_network import DEFAULT_COLUMNS, METRICS, CentralityTable, centralities, in_out_diagnostics, \
    load_edgelist
from .regimes import MODE_METHODS, RegimePartition, classify_regimes, concordance, monthly_hubs, \
    switching_nodes

OUTPUT_ENV = "BRFMOB_OUTPUT_DIR"
PLOT_KINDS = ("histogram", "rank_size", "qq", "trajectory")
TIMESERIES_FIELDS = ("date", "A", "a", "b", "converged", "rss", "n_nodes", "ks_brf", "ks_power_law",
                     "ks_lognormal", "delta_aic", "best_by_ks", "best_by_aic", "mode_value", "n_high",
                     "n_low", "event", "vacation")


def _date(value):
    return value if isinstance(value, dt.date) else dt.date.fromisoformat(str(value))


def _num(x):
    """Float formatting for CSV cells: shortest round-trip repr, blank for missing."""
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (dt.date, Path)):
        return str(o)
    raise TypeError(f"cannot serialize {type(o).__name__}")


def write_json(path, obj):
    text = json.dumps(obj, indent=2, sort_keys=True, default=_json_default, allow_nan=True)
    Path(path).write_text(text + "\n", encoding="utf-8")


def _write_csv(path, header, rows):
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


@dataclass
class RunConfig:
    """Settings of a batch run; loaded from JSON.

    Relative paths in a config file are resolved against the file's
    directory. ``event_dates`` and ``vacation`` only label output rows.
    """

    input_dir: str = "data"
    filename_pattern: str = "%Y-%m-%d.csv"
    columns: dict = field(default_factory=lambda: dict(DEFAULT_COLUMNS))
    delimiter: str = ","
    fit_space: str = "log"
    mode_method: str = "brf_fit"
    include_self_loops: bool = False
    reference_point: list = field(default_factory=lambda: [0.0, 0.0])
    covariate_files: list = field(default_factory=list)
    covariate_columns: dict = field(default_factory=dict)
    association_dates: list = field(default_factory=list)
    switching_pairs: list = field(default_factory=list)
    event_dates: dict = field(default_factory=dict)
    vacation: list = field(default_factory=list)
    hub_k: int = 20
    concordance_threshold_days: int = 200
    output_dir: str = "output"
    workers: int = 1
    seed: int = 0

    @classmethod
    def from_dict(cls, d, base_dir=None):
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        cfg = cls(**d)
        if base_dir is not None:
            base = Path(base_dir)
            cfg.input_dir = str(base / cfg.input_dir)
            cfg.output_dir = str(base / cfg.output_dir)
            cfg.covariate_files = [str(base / p) for p in cfg.covariate_files]
        cfg.check()
        return cfg

    @classmethod
    def load(cls, path):
        path = Path(path)
        try:
            d = json.loads(path.read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise UsageError(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise UsageError(f"config file {path} is not valid JSON: {exc}") from None
        return cls.from_dict(d, base_dir=path.parent)

    def check(self):
        if self.fit_space not in FIT_SPACES:
            raise UsageError(f"fit_space must be one of {FIT_SPACES}")
        if self.mode_method not in MODE_METHODS:
            raise UsageError(f"mode_method must be one of {MODE_METHODS}")
        if int(self.workers) < 1:
            raise UsageError("workers must be at least 1")
        if self.vacation and len(self.vacation) != 2:
            raise UsageError("vacation must be [start, end]")
        dates = list(self.event_dates.values()) + list(self.vacation) + list(self.association_dates)
        for pair in self.switching_pairs:
            if len(pair) != 2:
                raise UsageError(f"switching pair must hold two dates, got {pair!r}")
            dates.extend(pair)
        for d in dates:
            try:
                _date(d)
            except ValueError:
                raise UsageError(f"not an ISO date in config: {d!r}") from None
        missing = [p for p in self.covariate_files if not Path(p).is_file()]
        if missing:
            raise UsageError(f"covariate files not found: {missing}")

    @property
    def output_path(self):
        return Path(os.environ.get(OUTPUT_ENV) or self.output_dir)

    def to_dict(self):
        return asdict(self)


def discover_days(config):
    """``[(date, path)]`` for files in the input directory matching the date pattern, by date."""
    root = Path(config.input_dir)
    if not root.is_dir():
        raise UsageError(f"input directory not found: {root}")
    days = {}
    for p in sorted(root.iterdir()):
        try:
            d = dt.datetime.strptime(p.name, config.filename_pattern).date()
        except ValueError:
            continue
        if d in days:
            raise UsageError(f"two input files for {d}: {days[d].name}, {p.name}")
        days[d] = p
    return sorted(days.items())


def day_path(config, date):
    return Path(config.input_dir) / _date(date).strftime(config.filename_pattern)


@dataclass
class DayResult:
    date: dt.date
    n_nodes: int
    n_edges: int
    n_self_loops: int
    n_merged: int
    n_malformed: int
    cents: CentralityTable
    verdicts: dict
    partitions: dict
    diagnostics: dict

    def fit(self, metric):
        return self.verdicts[metric].fits["brf"]

    def summary(self):
        return {"date": str(self.date), "n_nodes": self.n_nodes, "n_edges": self.n_edges,
                "n_self_loops": self.n_self_loops, "n_merged": self.n_merged,
                "n_malformed": self.n_malformed}


def analyze_network(net, config):
    """All per-day analyses of one network, without writing anything."""
    cents = centralities(net, include_self_loops=config.include_self_loops)
    verdicts, parts, diags = {}, {}, {}
    for metric in METRICS:
        values = cents.metric(metric)
        verdict = compare_models(values, config.fit_space, label=f"{net.date}/{metric}")
        if "brf" not in verdict.fits:
            raise InsufficientDataError(f"BRF fit failed for {metric}: {verdict.errors.get('brf')}")
        verdicts[metric] = verdict
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)   # the fallback is kept in partition.notes
            parts[metric] = classify_regimes(cents, metric, config.mode_method, config.fit_space,
                                             net.date, fit=verdict.fits["brf"])
        try:
            diags[metric] = in_out_diagnostics(cents, metric).to_dict()
        except UsageError as exc:
            diags[metric] = {"error": str(exc)}
    return DayResult(net.date, net.n_nodes, net.n_edges, net.n_self_loops, net.n_merged, net.n_malformed,
                     cents, verdicts, parts, diags)


def write_day(result, day_dir):
    """Write the day's artifacts into a fresh directory, replacing ``day_dir`` atomically."""
    day_dir = Path(day_dir)
    day_dir.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=f".{day_dir.name}-", dir=day_dir.parent))
    try:
        result.cents.to_csv(tmp / "centralities.csv")
        write_json(tmp / "fits.json", {m: result.fit(m).to_dict() for m in METRICS})
        write_json(tmp / "comparison.json", {m: result.verdicts[m].to_dict() for m in METRICS})
        for m in METRICS:
            result.partitions[m].to_csv(tmp / f"partition_{m}.csv")
        parts = {m: {"mode_value": p.mode_value, "mode_method": p.mode_method, "n_high": p.n_high,
                     "n_low": p.n_low, "notes": list(p.notes)} for m, p in result.partitions.items()}
        write_json(tmp / "summary.json", dict(result.summary(), partitions=parts,
                                              in_out=result.diagnostics))
        if day_dir.exists():
            shutil.rmtree(day_dir)
        os.replace(tmp, day_dir)
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise


def run_day(config, date, path=None, write=True):
    """Load, analyze and (optionally) write one day; returns a :class:`DayResult`."""
    date = _date(date)
    path = Path(path) if path is not None else day_path(config, date)
    if not path.is_file():
        raise IngestionError("day file not found", path)
    net = load_edgelist(path, config.columns, date, config.delimiter)
    result = analyze_network(net, config)
    if write:
        write_day(result, config.output_path / "days" / str(date))
    return result


def _day_task(args):
    config, date, path = args
    try:
        return date, run_day(config, date, path), None
    except Exception as exc:   # recorded in the manifest; the batch continues
        return date, None, f"{type(exc).__name__}: {exc}"


@dataclass
class ParameterTimeSeries:
    """Fitted BRF parameters and model-selection summary per (date, metric), by date."""

    rows: dict

    @classmethod
    def from_results(cls, results, config):
        events = {_date(d): label for label, d in config.event_dates.items()}
        vac = [_date(d) for d in config.vacation]
        rows = {m: [] for m in METRICS}
        for r in sorted(results, key=lambda r: r.date):
            for m in METRICS:
                v, f, p = r.verdicts[m], r.fit(m), r.partitions[m]
                ks = {k: (v.per_model[k].ks_statistic if k in v.per_model else None)
                      for k in ("brf", "power_law", "lognormal")}
                rows[m].append({
                    "date": r.date, "A": f.params["A"], "a": f.params["a"], "b": f.params["b"],
                    "converged": f.converged, "rss": f.rss, "n_nodes": v.n,
                    "ks_brf": ks["brf"], "ks_power_law": ks["power_law"], "ks_lognormal": ks["lognormal"],
                    "delta_aic": v.delta_aic_brf_vs_powerlaw, "best_by_ks": v.best_by_ks,
                    "best_by_aic": v.best_by_aic, "mode_value": p.mode_value, "n_high": p.n_high,
                    "n_low": p.n_low, "event": events.get(r.date, ""),
                    "vacation": bool(vac) and vac[0] <= r.date <= vac[1],
                })
        return cls(rows)

    def write(self, out_dir):
        for m, rows in self.rows.items():
            cells = [[str(r["date"]) if k == "date" else r[k] if isinstance(r[k], str) else _num(r[k])
                      for k in TIMESERIES_FIELDS] for r in rows]
            _write_csv(out_dir / f"timeseries_{m}.csv", TIMESERIES_FIELDS, cells)
            _write_csv(out_dir / f"trajectory_{m}.csv", ["date", "month", "a", "b", "event", "vacation"],
                       [[str(r["date"]), f"{r['date']:%Y-%m}", _num(r["a"]), _num(r["b"]), r["event"],
                         _num(r["vacation"])] for r in rows])


@dataclass
class BatchResult:
    results: list
    failures: dict
    timeseries: ParameterTimeSeries
    manifest: dict

    @property
    def n_failed(self):
        return len(self.failures)


def _aggregate(config, results, out_dir, covariates):
    ts = ParameterTimeSeries.from_results(results, config)
    ts.write(out_dir)

    deg = [r.partitions["degree"] for r in results]
    stren = [r.partitions["strength"] for r in results]
    conc = concordance(deg, stren, config.concordance_threshold_days)
    write_json(out_dir / "concordance.json", conc.to_dict())
    _write_csv(out_dir / "persistent_discordant.csv", ["node", "discordant_days", "days_observed"],
               [[n, conc.discordant_days[n], conc.days_observed[n]] for n in conc.persistent])

    hub_dir = out_dir / "hubs"
    hub_dir.mkdir()
    for m in METRICS:
        for month, ranking in monthly_hubs([r.cents for r in results], m, config.hub_k).items():
            ranking.to_csv(hub_dir / f"{m}_{month}.csv")

    by_date = {r.date: r for r in results}
    notes = []
    for d1, d2 in config.switching_pairs:
        d1, d2 = _date(d1), _date(d2)
        if d1 not in by_date or d2 not in by_date:
            notes.append(f"switching pair {d1}/{d2} skipped: day not available")
            continue
        for m in METRICS:
            rows = switching_nodes(by_date[d1].partitions[m], by_date[d2].partitions[m])
            _write_csv(out_dir / f"switching_{m}_{d1}_{d2}.csv", ["node", "from", "to"], rows)

    if covariates is not None:
        for d in config.association_dates:
            d = _date(d)
            if d not in by_date:
                notes.append(f"association date {d} skipped: day not available")
                continue
            for m in METRICS:
                reports, join = association_tests(by_date[d].partitions[m], covariates)
                write_json(out_dir / f"associations_{m}_{d}.json",
                           {"join": join.to_dict(), "tests": [r.to_dict() for r in reports]})
    return ts, conc, notes


def run_batch(config, workers=None):
    """Analyze every day in the input directory, then build the aggregate reports.

    Raises :class:`BatchError` when no day can be processed; otherwise
    failed days are listed in the manifest and ``n_failed`` is set.
    """
    workers = int(workers or config.workers)
    days = discover_days(config)
    if not days:
        raise BatchError(f"no input files matching {config.filename_pattern!r} in {config.input_dir}")
    covariates = None
    if config.covariate_files:
        cov_cfg = CovariateConfig.from_dict(dict(config.covariate_columns,
                                                 reference=tuple(config.reference_point)))
        covariates = load_covariates(config.covariate_files, cov_cfg)
    out = config.output_path
    out.mkdir(parents=True, exist_ok=True)
    tasks = [(config, d, p) for d, p in days]
    if workers == 1:
        outcomes = [_day_task(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_day_task, tasks))

    results, failures, entries = [], {}, []
    for (d, p), (_, res, err) in zip(days, outcomes):
        entry = {"date": str(d), "file": p.name, "status": "success" if err is None else "failure"}
        if err is None:
            results.append(res)
            entry.update(res.summary())
        else:
            failures[d] = err
            entry["error"] = err
            stale = out / "days" / str(d)
            if stale.exists():
                shutil.rmtree(stale)
        entries.append(entry)

    lo, hi = days[0][0], days[-1][0]
    notes = [f"event {label} ({d}) lies outside the input range {lo}..{hi}"
             for label, d in sorted(config.event_dates.items()) if not lo <= _date(d) <= hi]
    manifest = {"n_days": len(days), "n_success": len(results), "n_failure": len(failures),
                "days": entries, "fit_space": config.fit_space, "mode_method": config.mode_method,
                "include_self_loops": config.include_self_loops, "notes": notes}
    agg_final = out / "aggregate"
    if not results:
        write_json(out / "manifest.json", manifest)
        raise BatchError(f"all {len(days)} days failed; see {out / 'manifest.json'}")

    tmp = Path(tempfile.mkdtemp(prefix=".aggregate-", dir=out))
    try:
        ts, conc, agg_notes = _aggregate(config, results, tmp, covariates)
        if agg_final.exists():
            shutil.rmtree(agg_final)
        os.replace(tmp, agg_final)
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    manifest["notes"] = notes + agg_notes
    write_json(out / "manifest.json", manifest)
    return BatchResult(results, failures, ts, manifest)


# ---------------------------------------------------------------- plot data


def _load_day_artifacts(output_dir, date):
    day_dir = Path(output_dir) / "days" / str(_date(date))
    if not day_dir.is_dir():
        raise UsageError(f"no results for {date} under {output_dir}")
    cents = CentralityTable.from_csv(day_dir / "centralities.csv", date)
    fits = json.loads((day_dir / "fits.json").read_text(encoding="utf-8"))
    return cents, fits


def _fit_params(fit):
    p = fit["params"]
    return DgbdParams(p["A"], p["a"], p.get("b", 0.0), fit["n"])


def histogram_rows(values, params, bins=40):
    """Rows of (left, right, center, count, density, model_density) over log values, plus log-mode."""
    x = np.asarray(values, dtype=np.float64)
    z = np.log(x[x > 0])
    counts, edges = np.histogram(z, bins=bins)
    width = np.diff(edges)
    centers = edges[:-1] + width / 2
    q = params.to_brf()
    try:
        model = brf_log_density(q, centers)
        z_mode = brf_log_mode(q)[1]
    except BrfmobError:
        model = np.full_like(centers, np.nan)
        z_mode = math.nan
    dens = counts / (counts.sum() * width)
    rows = [[_num(a), _num(b), _num(c), int(k), _num(d), _num(m)]
            for a, b, c, k, d, m in zip(edges[:-1], edges[1:], centers, counts, dens, model)]
    return rows, z_mode


def emit_plot_data(output_dir, kind, metric="degree", dates=None, dest=None):
    """Write plot-ready CSVs for processed days; returns the written paths.

    ``histogram``: log-value bins with the fitted log-density and the mode.
    ``rank_size``: ranked values with the fitted DGBD curve. ``qq``: normal
    q-q pairs of standardized log values. ``trajectory``: daily (a, b)
    from the batch time series.
    """
    if kind not in PLOT_KINDS:
        raise UsageError(f"plot kind must be one of {PLOT_KINDS}, got {kind!r}")
    if metric not in METRICS:
        raise UsageError(f"metric must be one of {METRICS}, got {metric!r}")
    output_dir = Path(output_dir)
    dest = Path(dest) if dest is not None else output_dir / "plots"
    dest.mkdir(parents=True, exist_ok=True)
    if kind == "trajectory":
        src = output_dir / "aggregate" / f"trajectory_{metric}.csv"
        if not src.is_file():
            raise UsageError(f"no batch trajectory at {src}; run the batch first")
        target = dest / f"trajectory_{metric}.csv"
        shutil.copyfile(src, target)
        return [target]
    if dates is None:
        day_root = output_dir / "days"
        dates = sorted(p.name for p in day_root.iterdir() if p.is_dir() and not p.name.startswith(".")) \
            if day_root.is_dir() else []
    if not dates:
        raise UsageError(f"no processed days under {output_dir}")
    written = []
    for d in dates:
        cents, fits = _load_day_artifacts(output_dir, d)
        values = cents.metric(metric)
        params = _fit_params(fits[metric])
        target = dest / f"{kind}_{metric}_{_date(d)}.csv"
        if kind == "histogram":
            rows, z_mode = histogram_rows(values, params)
            _write_csv(target, ["bin_left", "bin_right", "bin_center", "count", "density",
                                "model_density", "log_mode"], [r + [_num(z_mode)] for r in rows])
        elif kind == "rank_size":
            s = rank_sample(values)
            fitted = dgbd_eval(params, s.ranks)
            _write_csv(target, ["rank", "value", "fitted"],
                       [[int(r), _num(v), _num(f)] for r, v, f in zip(s.ranks, s.values, fitted)])
        else:
            pairs = qq_log_data(values)
            _write_csv(target, ["theoretical", "sample"], [[_num(a), _num(b)] for a, b in pairs])
        written.append(target)
    return written


def load_partitions(output_dir, metric):
    """Regime partitions of every processed day under ``output_dir``, in date order."""
    day_root = Path(output_dir) / "days"
    parts = []
    for p in sorted(day_root.iterdir()) if day_root.is_dir() else []:
        f = p / f"partition_{metric}.csv"
        if p.is_dir() and not p.name.startswith(".") and f.is_file():
            parts.append(RegimePartition.from_csv(f, date=p.name))
    return parts
