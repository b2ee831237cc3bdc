"""Command-line interface: ``brfmob <subcommand> ...``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 batch finished with
some failed days. The output directory comes from ``--output-dir`` when
given, else from ``BRFMOB_OUTPUT_DIR``, else from the config file.
"""
import argparse
import csv
import datetime as dt
import json
import os
from pathlib import Path
import sys

import numpy as np

from .covariates import CovariateConfig, association_tests, load_covariates
from .distributions import BrfQuantile
from .errors import BrfmobError, IngestionError, UsageError
from .model_selection import compare_models
from .od_network import METRICS, CentralityTable, centralities, load_edgelist, write_edgelist
from .pipeline import OUTPUT_ENV, PLOT_KINDS, RunConfig, emit_plot_data, load_partitions, run_batch, \
    run_day, write_json
from .regimes import MODE_METHODS, classify_regimes, monthly_hubs
from .synthetic import DEFAULT_DEGREE, DEFAULT_STRENGTH, generate_synthetic_day

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_PARTIAL = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _iso_date(text):
    try:
        return dt.date.fromisoformat(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an ISO date: {text!r}") from None


def _dump(obj, out=None):
    if out:
        write_json(out, obj)
    else:
        sys.stdout.write(json.dumps(obj, indent=2, sort_keys=True, default=str) + "\n")


def _output_dir(args, config=None):
    if getattr(args, "output_dir", None):
        return Path(args.output_dir)
    if os.environ.get(OUTPUT_ENV):
        return Path(os.environ[OUTPUT_ENV])
    if config is not None:
        return config.output_path
    raise UsageError("no output directory: pass --output-dir, set BRFMOB_OUTPUT_DIR or give --config")


def read_sample(path, column=None):
    """Positive values from a one-column file, or from ``column`` of a CSV with a header."""
    path = Path(path)
    text = path.read_text(encoding="utf-8-sig")
    if column is not None:
        rows = list(csv.DictReader(text.splitlines()))
        if not rows or column not in rows[0]:
            raise UsageError(f"column {column!r} not found in {path}")
        return np.array([float(r[column]) for r in rows if r[column].strip()])
    values = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        try:
            values.append(float(line))
        except ValueError:
            if lineno == 1:
                continue    # a header line
            raise IngestionError(f"{path}:{lineno}: not a number: {line!r}") from None
    return np.array(values)


def cmd_fit(args):
    x = read_sample(args.sample, args.column)
    verdict = compare_models(x, args.space, label=args.label or Path(args.sample).stem)
    _dump(verdict.to_dict(), args.out)
    return EXIT_OK


def _config_with_output(args):
    cfg = RunConfig.load(args.config)
    if getattr(args, "output_dir", None):
        cfg.output_dir = args.output_dir
        os.environ.pop(OUTPUT_ENV, None)
    return cfg


def cmd_analyze_day(args):
    cfg = _config_with_output(args)
    res = run_day(cfg, args.date, args.file)
    summary = dict(res.summary(), output=str(cfg.output_path / "days" / str(res.date)))
    for m in METRICS:
        v = res.verdicts[m]
        summary[m] = {"params": res.fit(m).params, "best_by_ks": v.best_by_ks, "best_by_aic": v.best_by_aic,
                      "mode_value": res.partitions[m].mode_value}
    _dump(summary)
    return EXIT_OK


def cmd_batch(args):
    cfg = _config_with_output(args)
    result = run_batch(cfg, workers=args.workers)
    m = result.manifest
    print(f"{m['n_success']} of {m['n_days']} days analyzed; output in {cfg.output_path}")
    for d, err in sorted(result.failures.items()):
        print(f"FAILED {d}: {err}", file=sys.stderr)
    return EXIT_PARTIAL if result.n_failed else EXIT_OK


def _day_tables(out_dir):
    day_root = out_dir / "days"
    if not day_root.is_dir():
        raise UsageError(f"no processed days under {out_dir}")
    tables = []
    for p in sorted(day_root.iterdir()):
        if p.is_dir() and not p.name.startswith(".") and (p / "centralities.csv").is_file():
            tables.append(CentralityTable.from_csv(p / "centralities.csv", dt.date.fromisoformat(p.name)))
    if not tables:
        raise UsageError(f"no processed days under {out_dir}")
    return tables


def cmd_hubs(args):
    cfg = RunConfig.load(args.config) if args.config else None
    out_dir = _output_dir(args, cfg)
    rankings = monthly_hubs(_day_tables(out_dir), args.metric, args.k)
    if args.month:
        if args.month not in rankings:
            raise UsageError(f"no processed days in {args.month}")
        rankings = {args.month: rankings[args.month]}
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["month", "rank", "node", f"mean_{args.metric}"])
    for month, r in rankings.items():
        for i, (node, v) in enumerate(r.entries, start=1):
            w.writerow([month, i, node, repr(v)])
    return EXIT_OK


def cmd_regimes(args):
    net = load_edgelist(args.edgelist, date=args.date, delimiter=args.delimiter)
    cents = centralities(net, include_self_loops=args.self_loops)
    part = classify_regimes(cents, args.metric, args.mode_method, args.space)
    if args.out:
        part.to_csv(args.out)
    else:
        w = csv.writer(sys.stdout, lineterminator="\n")
        w.writerow(["node", "metric", "label", "mode_value", "value"])
        for n, v, h in zip(part.nodes.tolist(), part.values.tolist(), part.high.tolist()):
            w.writerow([n, part.metric, "high" if h else "low", repr(part.mode_value), repr(v)])
    print(f"mode_value={part.mode_value!r} method={part.mode_method} high={part.n_high} low={part.n_low}",
          file=sys.stderr)
    return EXIT_OK


def cmd_covariates(args):
    cfg = RunConfig.load(args.config)
    if not cfg.covariate_files:
        raise UsageError("config lists no covariate_files")
    out_dir = _output_dir(args, cfg)
    cov_cfg = CovariateConfig.from_dict(dict(cfg.covariate_columns, reference=tuple(cfg.reference_point)))
    cov = load_covariates(cfg.covariate_files, cov_cfg)
    report = {}
    for m in ([args.metric] if args.metric else METRICS):
        parts = {p.date: p for p in load_partitions(out_dir, m)}
        if args.date not in parts:
            raise UsageError(f"no {m} partition for {args.date} under {out_dir}; run analyze-day first")
        reports, join = association_tests(parts[args.date], cov, encoding=args.encoding)
        report[m] = {"join": join.to_dict(), "tests": [r.to_dict() for r in reports]}
    _dump(report, args.out)
    return EXIT_OK


def cmd_simulate(args):
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    deg = BrfQuantile.from_values(*args.degree) if args.degree else DEFAULT_DEGREE
    stren = BrfQuantile.from_values(*args.strength) if args.strength else DEFAULT_STRENGTH
    for i in range(args.days):
        d = args.start + dt.timedelta(days=i)
        # per-day seeds derived from the run seed so days differ but the set is reproducible
        net = generate_synthetic_day(args.n_nodes, deg, stren, seed=[args.seed, i], date=d)
        write_edgelist(net, out / d.strftime(args.pattern))
    print(f"wrote {args.days} synthetic days to {out}")
    return EXIT_OK


def cmd_plot_data(args):
    cfg = RunConfig.load(args.config) if args.config else None
    out_dir = _output_dir(args, cfg)
    dates = [str(d) for d in args.date] if args.date else None
    for p in emit_plot_data(out_dir, args.kind, args.metric, dates, args.dest):
        print(p)
    return EXIT_OK


def build_parser():
    p = _Parser(prog="brfmob", description="BRF analysis of daily origin-destination networks.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("fit", help="fit BRF, power law and lognormal to one sample and compare them")
    s.add_argument("sample", help="file with one value per line, or a CSV (see --column)")
    s.add_argument("--column", help="CSV column holding the values")
    s.add_argument("--space", choices=("log", "raw"), default="log")
    s.add_argument("--label", default="")
    s.add_argument("--out", help="write the JSON verdict here instead of stdout")
    s.set_defaults(func=cmd_fit)

    s = sub.add_parser("analyze-day", help="run the per-day analysis for one date")
    s.add_argument("--config", required=True)
    s.add_argument("--date", required=True, type=_iso_date)
    s.add_argument("--file", help="edgelist path (default: from the config's filename pattern)")
    s.add_argument("--output-dir")
    s.set_defaults(func=cmd_analyze_day)

    s = sub.add_parser("batch", help="analyze every day in the input directory and aggregate")
    s.add_argument("--config", required=True)
    s.add_argument("--workers", type=int, help="process pool size (default: from config)")
    s.add_argument("--output-dir")
    s.set_defaults(func=cmd_batch)

    s = sub.add_parser("hubs", help="monthly top-k nodes from processed days")
    s.add_argument("--config")
    s.add_argument("--output-dir")
    s.add_argument("--metric", choices=METRICS, default="strength")
    s.add_argument("--k", type=int, default=20)
    s.add_argument("--month", help="YYYY-MM; default all months")
    s.set_defaults(func=cmd_hubs)

    s = sub.add_parser("regimes", help="high/low regime labels for one edgelist")
    s.add_argument("edgelist")
    s.add_argument("--metric", choices=METRICS, default="degree")
    s.add_argument("--mode-method", choices=MODE_METHODS, default="brf_fit")
    s.add_argument("--space", choices=("log", "raw"), default="log")
    s.add_argument("--date", type=_iso_date)
    s.add_argument("--delimiter", default=",")
    s.add_argument("--self-loops", action="store_true", help="count self-loops in centralities")
    s.add_argument("--out", help="partition CSV path (default: stdout)")
    s.set_defaults(func=cmd_regimes)

    s = sub.add_parser("covariates", help="association tests of a processed day against covariates")
    s.add_argument("--config", required=True)
    s.add_argument("--date", required=True, type=_iso_date)
    s.add_argument("--metric", choices=METRICS)
    s.add_argument("--encoding", choices=("ordinal", "onehot"), default="ordinal",
                   help="marginalization encoding in the logistic fit")
    s.add_argument("--output-dir")
    s.add_argument("--out")
    s.set_defaults(func=cmd_covariates)

    s = sub.add_parser("simulate", help="write synthetic daily edgelists")
    s.add_argument("--out-dir", required=True)
    s.add_argument("--n-nodes", type=int, default=2000)
    s.add_argument("--days", type=int, default=10)
    s.add_argument("--start", type=_iso_date, default=dt.date(2020, 1, 1))
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--degree", type=float, nargs=3, metavar=("A", "a", "b"))
    s.add_argument("--strength", type=float, nargs=3, metavar=("A", "a", "b"))
    s.add_argument("--pattern", default="%Y-%m-%d.csv", help="strftime file name pattern")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("plot-data", help="write plot-ready CSVs from processed results")
    s.add_argument("--kind", required=True, choices=PLOT_KINDS)
    s.add_argument("--metric", choices=METRICS, default="degree")
    s.add_argument("--date", type=_iso_date, action="append")
    s.add_argument("--config")
    s.add_argument("--output-dir")
    s.add_argument("--dest", help="directory for the CSVs (default: <output>/plots)")
    s.set_defaults(func=cmd_plot_data)
    return p


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (BrfmobError, OSError, ValueError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
