import json
import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from brfmob.distributions import BrfQuantile, DgbdParams, brf_sample, dgbd_eval
from brfmob.fitting import FitReport
from brfmob.model_selection import (
    P_FLOOR, aic, compare_models, format_pvalue, kolmogorov_sf, ks_pvalue, ks_statistic)


def kolmogorov_series(lam):
    """Oracle: the alternating series summed to convergence in extended precision."""
    return float(2 * mpmath.nsum(lambda k: (-1) ** (k - 1) * mpmath.exp(-2 * k * k * lam * lam),
                                 [1, mpmath.inf]))


class TestKsStatistic:
    def test_model_quantile_sample(self):
        n = 40
        q = BrfQuantile.from_values(3.0, 0.6, 0.8)
        x = q.quantile(1 - (np.arange(1, n + 1) - 0.5) / n)
        assert ks_statistic(x, q.cdf) == pytest.approx(0.5 / n, abs=1e-12)

    def test_single_point(self):
        assert ks_statistic([1.0], lambda x: np.full_like(x, 0.3)) == pytest.approx(0.7)

    def test_two_points(self):
        F = {1.0: 0.1, 2.0: 0.2}
        d = ks_statistic([2.0, 1.0], lambda x: np.array([F[v] for v in x]))
        assert d == pytest.approx(0.8)

    def test_matches_scipy(self):
        x = np.random.default_rng(1).normal(size=300)
        assert ks_statistic(x, stats.norm.cdf) == pytest.approx(stats.kstest(x, "norm").statistic, abs=1e-14)

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 2 ** 31))
    def test_invariant_under_log(self, seed):
        q = BrfQuantile.from_values(5.0, 0.7, 0.4)
        x = brf_sample(q, 200, seed=seed)
        mu, sigma = np.log(x).mean(), np.log(x).std()
        d_raw = ks_statistic(x, lambda t: stats.norm.cdf((np.log(t) - mu) / sigma))
        d_log = ks_statistic(np.log(x), lambda z: stats.norm.cdf((z - mu) / sigma))
        assert d_raw == pytest.approx(d_log, abs=1e-12)


class TestKsPvalue:
    def test_zero(self):
        assert ks_pvalue(0.0, 100) == 1.0

    def test_total_separation(self):
        p = ks_pvalue(1.0, 10_000)
        assert p < 1e-300
        assert format_pvalue(p) == "< 2.2e-16"

    def test_critical_value(self):
        assert kolmogorov_sf(1.36) == pytest.approx(kolmogorov_series(1.36), abs=1e-12)
        assert kolmogorov_sf(1.36) == pytest.approx(0.049, abs=0.002)
        assert ks_pvalue(1.36 / 10, 100) == pytest.approx(kolmogorov_series(1.36), abs=1e-12)

    @pytest.mark.parametrize("lam", [0.2, 0.5, 0.8, 0.999, 1.0, 1.5, 3.0])
    def test_against_oracles(self, lam):
        assert kolmogorov_sf(lam) == pytest.approx(stats.kstwobign.sf(lam), abs=1e-10)
        if lam >= 0.5:
            assert kolmogorov_sf(lam) == pytest.approx(kolmogorov_series(lam), abs=1e-10)

    def test_format(self):
        assert format_pvalue(0.05) == "0.05"
        assert format_pvalue(P_FLOOR / 10) == "< 2.2e-16"


def _fit(rss, k, n=100):
    return FitReport("brf" if k == 3 else "power_law", {}, rss, k, n)


class TestAic:
    def test_penalty_only(self):
        assert aic(_fit(3.7, 3)) - aic(_fit(3.7, 2)) == pytest.approx(2.0, abs=1e-12)

    def test_halved_rss(self):
        assert aic(_fit(2.0, 3)) - aic(_fit(4.0, 3)) == pytest.approx(-100 * math.log(2), abs=1e-10)

    def test_zero_rss(self):
        assert aic(_fit(0.0, 3)) == -math.inf

    def test_lognormal_uses_nll(self):
        f = FitReport("lognormal", {"mu": 0, "sigma": 1}, 12.5, 2, 30, rss_is_nll=True)
        assert aic(f) == pytest.approx(29.0)


class TestCompareModels:
    def test_brf_synthetic(self):
        x = brf_sample(BrfQuantile.from_values(50.0, 0.7, 0.4), 5000, seed=7)
        v = compare_models(x)
        assert v.best_by_ks == "brf"
        assert v.best_by_aic == "brf"
        assert v.delta_aic_brf_vs_powerlaw < 0
        for s in v.per_model.values():
            assert 0 <= s.ks_statistic <= 1 and 0 <= s.ks_pvalue <= 1

    def test_exact_power_law(self):
        x = dgbd_eval(DgbdParams(2.0, 1.1, 0.0, 800), np.arange(1, 801))
        v = compare_models(x)
        assert v.delta_aic_brf_vs_powerlaw == pytest.approx(2.0, abs=1e-9)

    @settings(max_examples=20, deadline=None)
    @given(seed=st.integers(0, 2 ** 31))
    def test_delta_aic_bounded_by_penalty(self, seed):
        x = brf_sample(BrfQuantile.from_values(1.0, 0.9, 0.0), 500, seed=seed)
        assert compare_models(x).delta_aic_brf_vs_powerlaw <= 2.0 + 1e-9

    def test_json_round_trip(self):
        x = brf_sample(BrfQuantile.from_values(50.0, 0.5, 0.5), 300, seed=1)
        d = compare_models(x, label="2020-04-26/strength").to_dict()
        back = json.loads(json.dumps(d))
        assert back["label"] == "2020-04-26/strength"
        assert set(back["per_model"]) == {"brf", "power_law", "lognormal"}
        assert back["delta_aic_brf_vs_powerlaw"] == pytest.approx(
            back["per_model"]["brf"]["aic"] - back["per_model"]["power_law"]["aic"])

    def test_failed_model_recorded(self):
        # constant log values: lognormal degenerates, the rank-size fits do not fail
        v = compare_models([3.0] * 20)
        assert "lognormal" in v.errors
        assert set(v.per_model) == {"brf", "power_law"}
