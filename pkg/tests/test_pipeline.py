import csv
import datetime as dt
import json
from pathlib import Path

import numpy as np
import pytest

from brfmob.distributions import DgbdParams, dgbd_eval
from brfmob.errors import BatchError, IngestionError, UsageError
from brfmob.od_network import CentralityTable
from brfmob.pipeline import RunConfig, discover_days, emit_plot_data, run_batch, run_day

from conftest import N_DAYS, START


def config(root, out, **kw):
    d = {"input_dir": str(root / "in"), "output_dir": str(out)}
    d.update(kw)
    return RunConfig.from_dict(d)


def tree_bytes(root):
    root = Path(root)
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture(scope="module")
def batch(synthetic_input, tmp_path_factory):
    out = tmp_path_factory.mktemp("batch_out")
    cfg = config(synthetic_input, out,
                 covariate_files=[str(synthetic_input / "cov.csv")],
                 reference_point=[0.0, 0.0],
                 association_dates=[str(START)],
                 switching_pairs=[[str(START), str(START + dt.timedelta(days=5))], ["2020-06-01", "2020-06-02"]],
                 event_dates={"marker": str(START + dt.timedelta(days=2)), "outside": "2020-11-11"},
                 vacation=[str(START + dt.timedelta(days=4)), str(START + dt.timedelta(days=10))],
                 hub_k=5)
    return cfg, run_batch(cfg), out


class TestConfig:
    def test_unknown_key(self, tmp_path):
        with pytest.raises(UsageError, match="unknown config keys"):
            RunConfig.from_dict({"inptu_dir": "x"})

    def test_bad_enum_and_date(self):
        with pytest.raises(UsageError):
            RunConfig.from_dict({"fit_space": "loglog"})
        with pytest.raises(UsageError, match="ISO date"):
            RunConfig.from_dict({"event_dates": {"x": "March 23"}})

    def test_relative_paths(self, tmp_path):
        (tmp_path / "cfg.json").write_text(json.dumps({"input_dir": "data", "output_dir": "res"}))
        cfg = RunConfig.load(tmp_path / "cfg.json")
        assert Path(cfg.input_dir) == tmp_path / "data"

    def test_missing_covariates(self, tmp_path):
        with pytest.raises(UsageError, match="covariate files not found"):
            RunConfig.from_dict({"covariate_files": [str(tmp_path / "nope.csv")]})

    def test_env_overrides_output(self, tmp_path, monkeypatch):
        monkeypatch.setenv("BRFMOB_OUTPUT_DIR", str(tmp_path / "env"))
        assert RunConfig.from_dict({"output_dir": "cfg"}).output_path == tmp_path / "env"

    def test_shipped_example(self):
        cfg = RunConfig.load(Path(__file__).parents[1] / "configs" / "run_2020.json")
        assert cfg.event_dates["lockdown"] == "2020-03-23" and cfg.workers == 4

    def test_discover(self, synthetic_input, tmp_path):
        (synthetic_input / "in" / "notes.txt").write_text("ignored")
        days = discover_days(config(synthetic_input, tmp_path))
        assert [d for d, _ in days] == [START + dt.timedelta(days=i) for i in range(N_DAYS)]


class TestRunDay:
    def test_artifacts(self, synthetic_input, tmp_path):
        cfg = config(synthetic_input, tmp_path)
        res = run_day(cfg, START)
        day = tmp_path / "days" / str(START)
        assert sorted(p.name for p in day.iterdir()) == [
            "centralities.csv", "comparison.json", "fits.json", "partition_degree.csv",
            "partition_strength.csv", "summary.json"]
        for m in ("degree", "strength"):
            assert res.verdicts[m].best_by_ks == "brf" and res.verdicts[m].best_by_aic == "brf"
            p = res.partitions[m]
            assert p.n_high + p.n_low == res.n_nodes
        comp = json.loads((day / "comparison.json").read_text())
        assert comp["strength"]["fits"]["brf"]["params"] == res.fit("strength").params
        assert not list(tmp_path.glob("days/.*"))   # no temp dirs left behind

    def test_malformed_day_leaves_nothing(self, tmp_path):
        (tmp_path / "in").mkdir()
        bad = tmp_path / "in" / "2020-01-01.csv"
        bad.write_text("source,target,weight\nA,B,-3\n")
        cfg = config(tmp_path, tmp_path / "out")
        with pytest.raises(IngestionError):
            run_day(cfg, "2020-01-01")
        assert not (tmp_path / "out" / "days").exists()

    def test_missing_file(self, synthetic_input, tmp_path):
        with pytest.raises(IngestionError, match="not found"):
            run_day(config(synthetic_input, tmp_path), "2021-01-01")


class TestBatch:
    def test_timeseries(self, batch):
        cfg, res, out = batch
        assert res.n_failed == 0
        for m in ("degree", "strength"):
            rows = read_csv(out / "aggregate" / f"timeseries_{m}.csv")
            assert len(rows) == N_DAYS
            assert [r["date"] for r in rows] == sorted(r["date"] for r in rows)
            assert all(r["best_by_ks"] == "brf" and r["best_by_aic"] == "brf" for r in rows)
            assert [r["event"] for r in rows].count("marker") == 1
            assert [r["vacation"] for r in rows] == ["false"] * 4 + ["true"] * 2
            traj = read_csv(out / "aggregate" / f"trajectory_{m}.csv")
            assert [t["month"] for t in traj] == ["2020-01"] * 4 + ["2020-02"] * 2

    def test_manifest(self, batch):
        _, res, out = batch
        man = json.loads((out / "manifest.json").read_text())
        assert man["n_days"] == N_DAYS and len(man["days"]) == N_DAYS
        assert {e["status"] for e in man["days"]} == {"success"}
        assert any("outside" in n for n in man["notes"])
        assert any("2020-06-01" in n for n in man["notes"])

    def test_aggregates(self, batch):
        _, _, out = batch
        agg = out / "aggregate"
        conc = json.loads((agg / "concordance.json").read_text())
        assert 0 <= conc["pooled"] <= 1 and len(conc["per_day"]) == N_DAYS
        assert sorted(p.name for p in (agg / "hubs").iterdir()) == [
            "degree_2020-01.csv", "degree_2020-02.csv", "strength_2020-01.csv", "strength_2020-02.csv"]
        assert len(read_csv(agg / "hubs" / "strength_2020-01.csv")) == 5
        sw = read_csv(agg / f"switching_degree_{START}_{START + dt.timedelta(days=5)}.csv")
        assert all(r["from"] != r["to"] for r in sw)
        assoc = json.loads((agg / f"associations_strength_{START}.json").read_text())
        assert assoc["join"]["n_unmatched_covariates"] == 1
        pop = [t for t in assoc["tests"] if t["test"] == "rank_sum" and t["regressor"] == "population"][0]
        assert pop["direction"] == "high_shifted_right" and pop["p_value"] < 0.05

    def test_serial_parallel_identical(self, synthetic_input, tmp_path):
        a = run_batch(config(synthetic_input, tmp_path / "serial", hub_k=5), workers=1)
        b = run_batch(config(synthetic_input, tmp_path / "parallel", hub_k=5), workers=2)
        assert a.n_failed == b.n_failed == 0
        ta, tb = tree_bytes(tmp_path / "serial"), tree_bytes(tmp_path / "parallel")
        assert ta.keys() == tb.keys()
        assert [k for k in ta if ta[k] != tb[k]] == []

    def test_partial_failure(self, synthetic_input, tmp_path):
        src = tmp_path / "in"
        src.mkdir()
        for p in sorted((synthetic_input / "in").glob("*.csv"))[:2]:
            (src / p.name).write_bytes(p.read_bytes())
        (src / "2020-03-01.csv").write_text("source,target,weight\nA,B,x\n")
        res = run_batch(config(tmp_path, tmp_path / "out"))
        assert res.n_failed == 1
        entry = [e for e in res.manifest["days"] if e["date"] == "2020-03-01"][0]
        assert entry["status"] == "failure" and "non-numeric" in entry["error"]
        assert not (tmp_path / "out" / "days" / "2020-03-01").exists()

    def test_empty_and_all_failed(self, tmp_path):
        (tmp_path / "in").mkdir()
        with pytest.raises(BatchError):
            run_batch(config(tmp_path, tmp_path / "out"))
        (tmp_path / "in" / "2020-01-01.csv").write_text("source,target,weight\nA,B,1\n")
        with pytest.raises(BatchError, match="all 1 days failed"):
            run_batch(config(tmp_path, tmp_path / "out"))
        assert (tmp_path / "out" / "manifest.json").is_file()


class TestPlotData:
    def test_histogram_conserves_count(self, batch):
        _, _, out = batch
        [path] = emit_plot_data(out, "histogram", "strength", [str(START)])
        rows = read_csv(path)
        cents = CentralityTable.from_csv(out / "days" / str(START) / "centralities.csv")
        assert sum(int(r["count"]) for r in rows) == int(np.count_nonzero(cents.total_strength > 0))
        assert len({r["log_mode"] for r in rows}) == 1

    def test_rank_size(self, batch):
        _, _, out = batch
        [path] = emit_plot_data(out, "rank_size", "degree", [str(START)])
        rows = read_csv(path)
        cents = CentralityTable.from_csv(out / "days" / str(START) / "centralities.csv")
        assert float(rows[0]["value"]) == cents.total_degree.max()
        fit = json.loads((out / "days" / str(START) / "fits.json").read_text())["degree"]
        p = DgbdParams(fit["params"]["A"], fit["params"]["a"], fit["params"]["b"], len(rows))
        ranks = np.array([int(r["rank"]) for r in rows])
        np.testing.assert_array_equal([float(r["fitted"]) for r in rows], dgbd_eval(p, ranks))

    def test_qq_and_trajectory(self, batch, tmp_path):
        _, _, out = batch
        qq = emit_plot_data(out, "qq", "degree", dest=tmp_path)
        assert len(qq) == N_DAYS
        [traj] = emit_plot_data(out, "trajectory", "strength", dest=tmp_path)
        assert len(read_csv(traj)) == N_DAYS

    def test_unknown_kind(self, batch):
        with pytest.raises(UsageError):
            emit_plot_data(batch[2], "violin")
