import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import optimize, special, stats

from brfmob.covariates import (
    CovariateConfig, association_tests, irls, join_report, load_covariates, logistic_fit,
    parse_marginalization, rank_sum_test)
from brfmob.errors import IngestionError, UsageError
from brfmob.regimes import partition_by_threshold

# fixed 20-point dataset for the likelihood oracle
X20 = np.array([0.3, 1.2, -0.7, 2.1, 0.0, -1.5, 0.9, 1.8, -0.2, 0.6,
                -1.1, 2.5, 0.4, -0.4, 1.5, -2.0, 1.1, 0.2, -0.9, 0.8])
Y20 = np.array([0, 1, 0, 1, 1, 0, 0, 1, 0, 1, 0, 1, 0, 1, 1, 0, 1, 0, 0, 0])


def neg_loglik(beta, x, y):
    eta = beta[0] + beta[1] * x
    return float(np.sum(np.logaddexp(0, eta) - y * eta))


def brute_rank_sum_greater(x, y):
    """Oracle: enumerate every labelling of the pooled values with len(x) high members."""
    pooled = np.concatenate([x, y])
    ranks = stats.rankdata(pooled)
    obs = ranks[: len(x)].sum()
    hits = total = 0
    for mask in range(1 << pooled.size):
        if bin(mask).count("1") != len(x):
            continue
        s = sum(ranks[i] for i in range(pooled.size) if mask >> i & 1)
        hits += s >= obs - 1e-9
        total += 1
    return hits / total


class TestLoadCovariates:
    def write(self, tmp_path, name, text):
        p = tmp_path / name
        p.write_text(text)
        return p

    def test_distance(self, tmp_path):
        p = self.write(tmp_path, "c.csv", "ageb,x,y\n0900A,100,200\n0900B,3100,4200\n")
        cov = load_covariates(p, {"reference": [100, 200]})
        assert cov["0900A"].distance_to_center == 0.0
        assert cov["0900B"].distance_to_center == pytest.approx(5000.0)

    def test_merge_same_delimiter(self, tmp_path):
        a = self.write(tmp_path, "pop.csv", "ageb,population\n01,120\n02,0\n")
        b = self.write(tmp_path, "marg.csv", "ageb,grado\n01,Muy alto\n02,very_low\n03,Medio\n")
        cov = load_covariates([a, b], {"marginalization": "grado"})
        assert sorted(cov) == ["01", "02", "03"]
        assert (cov["01"].population, cov["01"].marginalization) == (120, "very_high")
        assert cov["02"].value("marginalization") == 1
        assert cov["03"].population is None and cov["03"].value("marginalization") == 3

    def test_missing_key(self, tmp_path):
        with pytest.raises(IngestionError, match="key column"):
            load_covariates(self.write(tmp_path, "c.csv", "id,population\n1,2\n"))

    def test_duplicates_listed(self, tmp_path):
        p = self.write(tmp_path, "c.csv", "ageb,population\n01,1\n02,2\n01,3\n02,4\n")
        with pytest.raises(IngestionError, match=r"\['01', '02'\]"):
            load_covariates(p)

    def test_bad_level_row(self, tmp_path):
        p = self.write(tmp_path, "c.csv", "ageb,marginalization\n01,alto\n02,extreme\n")
        with pytest.raises(IngestionError) as info:
            load_covariates(p)
        assert info.value.row == 3

    def test_parse_levels(self):
        assert parse_marginalization("MUY  BAJO") == "very_low"
        assert parse_marginalization("5") == "very_high"
        with pytest.raises(ValueError):
            parse_marginalization("6")

    def test_join_report(self):
        cov = {k: None for k in ("a", "b", "c", "d")}
        r = join_report(cov, ["b", "c", "e"])
        assert r.n_matched == 2
        assert r.unmatched_covariates == ["a", "d"] and r.unmatched_nodes == ["e"]


class TestRankSum:
    def test_enumeration_example(self):
        r = rank_sum_test([1, 2, 3], [4, 5, 6], alternative="less")
        assert r.method == "exact"
        assert r.p_value == pytest.approx(1 / 20, abs=1e-15)
        assert r.direction == "high_shifted_left"

    def test_identical_multisets(self):
        r = rank_sum_test([2.0, 5.0, 5.0, 7.0], [7.0, 5.0, 2.0, 5.0])
        assert r.p_value == 1.0 and r.direction == "n/a"

    def test_all_high_above_low(self):
        r = rank_sum_test([10, 11, 12, 13], [1, 2, 3, 4, 5], alternative="greater")
        assert r.direction == "high_shifted_right"
        assert r.p_value == pytest.approx(1 / math.comb(9, 4))

    @pytest.mark.parametrize("alt", ["two-sided", "greater", "less"])
    def test_exact_matches_scipy_without_ties(self, alt):
        rng = np.random.default_rng(3)
        for _ in range(20):
            x, y = rng.normal(size=5), rng.normal(0.5, 1, size=6)
            ours = rank_sum_test(x, y, alternative=alt)
            ref = stats.mannwhitneyu(x, y, alternative=alt, method="exact")
            assert ours.statistic == ref.statistic
            assert ours.p_value == pytest.approx(ref.pvalue, abs=1e-12)

    def test_exact_with_ties_against_brute_force(self):
        rng = np.random.default_rng(8)
        for _ in range(15):
            x = rng.integers(0, 4, size=4).astype(float)
            y = rng.integers(0, 4, size=5).astype(float)
            r = rank_sum_test(x, y, alternative="greater", method="exact")
            assert r.p_value == pytest.approx(brute_rank_sum_greater(x, y), abs=1e-12)

    @pytest.mark.parametrize("alt", ["two-sided", "greater", "less"])
    def test_normal_matches_scipy_with_ties(self, alt):
        rng = np.random.default_rng(4)
        x = rng.integers(0, 20, size=40).astype(float)
        y = rng.integers(3, 25, size=55).astype(float)
        ours = rank_sum_test(x, y, alternative=alt)
        ref = stats.mannwhitneyu(x, y, alternative=alt, method="asymptotic", use_continuity=True)
        assert ours.method == "normal"
        assert ours.p_value == pytest.approx(ref.pvalue, rel=1e-10)

    def test_exact_vs_normal_six_six(self):
        rng = np.random.default_rng(2024)
        for _ in range(50):
            x, y = rng.normal(size=6), rng.normal(rng.uniform(-1, 1), 1, size=6)
            pe = rank_sum_test(x, y, method="exact").p_value
            pn = rank_sum_test(x, y, method="normal").p_value
            assert abs(pe - pn) < 0.02

    def test_floor_display(self):
        rng = np.random.default_rng(0)
        r = rank_sum_test(rng.normal(5, 1, 500), rng.normal(0, 1, 500))
        assert r.p_value < 2.2e-16 and r.p_display == "< 2.2e-16"

    def test_empty_group(self):
        with pytest.raises(UsageError):
            rank_sum_test([], [1.0])


class TestLogistic:
    def test_likelihood_oracle(self):
        r = logistic_fit(Y20, X20)
        res = optimize.minimize(neg_loglik, [0.0, 0.0], args=(X20, Y20), method="Nelder-Mead",
                                options={"xatol": 1e-10, "fatol": 1e-12, "maxiter": 20000})
        assert r.coefficients["intercept"]["estimate"] == pytest.approx(res.x[0], abs=1e-3)
        assert r.coefficients["slope"]["estimate"] == pytest.approx(res.x[1], abs=1e-3)
        assert r.deviance == pytest.approx(2 * res.fun, abs=1e-8)
        assert r.converged and not r.separation

    def test_grid_oracle(self):
        # coarse-to-fine grid search over the two-parameter likelihood
        r = logistic_fit(Y20, X20)
        c0, c1, width = 0.0, 0.0, 4.0
        for _ in range(12):
            g0 = np.linspace(c0 - width, c0 + width, 41)
            g1 = np.linspace(c1 - width, c1 + width, 41)
            nll = np.array([[neg_loglik((a, b), X20, Y20) for b in g1] for a in g0])
            i, j = np.unravel_index(np.argmin(nll), nll.shape)
            c0, c1, width = g0[i], g1[j], width / 4
        assert (r.coefficients["intercept"]["estimate"], r.coefficients["slope"]["estimate"]) == \
            pytest.approx((c0, c1), abs=1e-3)

    def test_wald_against_statsmodels(self):
        sm = pytest.importorskip("statsmodels.api")
        ref = sm.Logit(Y20, sm.add_constant(X20)).fit(disp=0)
        r = logistic_fit(Y20, X20)
        np.testing.assert_allclose([r.coefficients["intercept"]["se"], r.coefficients["slope"]["se"]],
                                   ref.bse, rtol=1e-6)
        np.testing.assert_allclose(r.coefficients["slope"]["p_value"], ref.pvalues[1], rtol=1e-5)

    def test_null_case(self):
        rng = np.random.default_rng(12)
        x = rng.normal(size=400)
        y = rng.integers(0, 2, size=400)
        r = logistic_fit(y, x)
        assert abs(r.coefficients["slope"]["estimate"]) < 0.25
        assert r.p_value > 0.05

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 2 ** 31), scale=st.floats(1e-3, 1e4), shift=st.floats(-1e4, 1e4))
    def test_affine_invariance(self, seed, scale, shift):
        rng = np.random.default_rng(seed)
        x = rng.normal(size=60)
        y = (rng.random(60) < special.expit(0.3 + 1.1 * x)).astype(int)
        if y.min() == y.max():
            return
        r1 = logistic_fit(y, x)
        r2 = logistic_fit(y, scale * x + shift)
        if r1.separation:
            assert r2.separation
            return
        assert r2.coefficients["slope"]["estimate"] == pytest.approx(
            r1.coefficients["slope"]["estimate"] / scale, rel=1e-6)
        assert r2.deviance == pytest.approx(r1.deviance, abs=1e-8)
        assert r2.p_value == pytest.approx(r1.p_value, rel=1e-6)

    @settings(max_examples=40, deadline=None)
    @given(seed=st.integers(0, 2 ** 31))
    def test_deviance_never_increases(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(10, 80))
        x = rng.standard_cauchy(n)
        y = (rng.random(n) < special.expit(rng.normal() * x)).astype(int)
        if y.min() == y.max():
            y[0] = 1 - y[0]
        r = logistic_fit(y, x)
        assert np.all(np.diff(r.deviance_history) <= 0)

    def test_separation_flagged(self):
        x = np.arange(20.0)
        r = logistic_fit((x > 9.5).astype(int), x)
        assert r.separation and math.isnan(r.p_value)
        assert r.messages

    def test_single_class(self):
        with pytest.raises(UsageError, match="single class"):
            logistic_fit(np.ones(12), np.arange(12.0))

    def test_too_few(self):
        with pytest.raises(UsageError):
            logistic_fit([0, 1, 0], [1.0, 2.0, 3.0])

    def test_onehot_vs_ordinal(self):
        rng = np.random.default_rng(5)
        level = rng.integers(1, 6, size=300)
        y = (rng.random(300) < special.expit(1.5 - 0.6 * level)).astype(int)
        ordinal = logistic_fit(y, level, regressor_name="marginalization")
        onehot = logistic_fit(y, level, encoding="onehot", regressor_name="marginalization")
        assert ordinal.coefficients["slope"]["estimate"] < 0
        assert ordinal.direction == "high_shifted_left"
        assert set(onehot.coefficients) == {"intercept", "level_2", "level_3", "level_4", "level_5"}
        # a saturated one-hot model fits at least as well as the ordinal score
        assert onehot.deviance <= ordinal.deviance + 1e-9
        assert onehot.p_value < 0.05

    def test_irls_raw_interface(self):
        X = np.column_stack([np.ones(20), X20])
        beta, info, hist, it, conv = irls(X, Y20)
        assert conv and it < 20
        assert np.all(np.linalg.eigvalsh(info) > 0)


class TestAssociation:
    def test_end_to_end(self):
        rng = np.random.default_rng(1)
        nodes = [f"{i:04d}" for i in range(300)]
        pop = rng.integers(100, 5000, size=300)
        metric = pop * rng.lognormal(0, 0.3, size=300)
        part = partition_by_threshold(nodes, metric, np.median(metric), "degree")
        from brfmob.covariates import CovariateRecord
        cov = {n: CovariateRecord(n, int(p), "medium", (0.0, float(d)), float(d))
               for n, p, d in zip(nodes[:280], pop, rng.uniform(0, 1e4, 300))}
        reports, join = association_tests(part, cov)
        assert join.n_matched == 280 and len(join.unmatched_nodes) == 20
        by = {(r.test, r.regressor): r for r in reports}
        assert by[("rank_sum", "population")].direction == "high_shifted_right"
        assert by[("rank_sum", "population")].p_value < 1e-10
        assert by[("logistic", "population")].p_value < 1e-10
        # marginalization is constant here: the logistic fit reports the error
        assert math.isnan(by[("logistic", "marginalization")].p_value)
        assert by[("logistic", "marginalization")].messages
