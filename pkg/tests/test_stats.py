import itertools

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.stats import studentized_range as scipy_sr

from qtakit.errors import ParseError, ValidationError
from qtakit.stats import (
    LeveneResult,
    ScoreMatrix,
    icc1,
    levene,
    n_eff,
    paired_battery,
    repeat_means,
    rm_anova_tukey,
    shapiro_wilk,
    studentized_range_cdf,
    studentized_range_crit,
    t_quantile,
    wilcoxon_signed_rank,
)


class TestRepeatMeans:
    def test_constant_scores(self):
        m = np.full((5, 5), 3.25)
        assert np.allclose(repeat_means(m), 3.25)

    def test_fold_scores_1_to_5(self):
        m = np.tile(np.arange(1.0, 6.0), (5, 1))
        assert np.allclose(repeat_means(m), 3.0)

    def test_hand_matrix(self):
        m = np.array([[1.0, 2.0], [5.0, 9.0]])
        assert np.allclose(repeat_means(m), [1.5, 7.0])


class TestStudentizedRange:
    def test_k2_equals_folded_t(self):
        # for k=2, P(Q <= q) = P(|T_df| <= q / sqrt(2))
        from scipy.special import stdtr

        for q, df in [(1.0, 4), (2.5, 8), (3.9266, 4), (5.0, 16)]:
            ours = studentized_range_cdf(q, 2, df)
            folded = 2.0 * stdtr(df, q / np.sqrt(2.0)) - 1.0
            assert abs(ours - folded) < 1e-5, (q, df)

    def test_against_scipy_grid(self):
        for k, df in [(3, 8), (5, 16), (4, 24), (7, 24)]:
            for q in (2.0, 3.5, 4.5, 6.0):
                ours = studentized_range_cdf(q, k, df)
                ref = float(scipy_sr.cdf(q, k, df))
                assert abs(ours - ref) < 1e-5, (k, df, q)

    def test_critical_value_table(self):
        # classical q_{0.05} table entries
        assert studentized_range_crit(0.05, 3, 8) == pytest.approx(4.041, abs=5e-3)
        assert studentized_range_crit(0.05, 5, 16) == pytest.approx(4.333, abs=5e-3)

    def test_t_quantile_against_quadrature(self):
        # numeric-integration oracle for the t CDF, inverted by bisection
        def t_pdf(x, df):
            from math import gamma

            return (
                gamma((df + 1) / 2)
                / (np.sqrt(df * np.pi) * gamma(df / 2))
                * (1 + x * x / df) ** (-(df + 1) / 2)
            )

        def quantile_oracle(p, df):
            lo, hi = 0.0, 50.0
            for _ in range(60):
                mid = (lo + hi) / 2
                cdf = 0.5 + quad(t_pdf, 0, mid, args=(df,))[0]
                if cdf < p:
                    lo = mid
                else:
                    hi = mid
            return (lo + hi) / 2

        got = t_quantile(0.975, 4)
        assert got == pytest.approx(2.7764, abs=1e-3)
        assert got == pytest.approx(quantile_oracle(0.975, 4), abs=1e-6)


class TestRmAnovaTukey:
    def test_identical_models_degenerate(self):
        means = {"a": np.array([1.0, 2.0, 3.0, 4.0, 5.0])}
        means["b"] = means["a"].copy()
        res = rm_anova_tukey(means)
        assert res.degenerate
        assert res.p_reported[0, 1] == 1.0

    def test_equal_means_with_noise_insignificant(self):
        rng = np.random.default_rng(8)
        base = rng.standard_normal(5)
        means = {"a": base + rng.standard_normal(5) * 0.1,
                 "b": base + rng.standard_normal(5) * 0.1}
        res = rm_anova_tukey(means)
        gap = abs(res.means[0] - res.means[1])
        assert res.p_reported[0, 1] > 0.05
        assert gap < res.msd

    def test_clear_separation_significant(self):
        rng = np.random.default_rng(9)
        means = {"a": 1.0 + rng.standard_normal(5) * 0.01,
                 "b": 2.0 + rng.standard_normal(5) * 0.01,
                 "c": 3.0 + rng.standard_normal(5) * 0.01}
        res = rm_anova_tukey(means)
        assert res.p_reported[0, 1] == 0.001  # floored
        assert abs(res.means[0] - res.means[1]) > res.msd

    def test_significance_consistency_invariant(self):
        # significant at alpha=0.05 iff |gap| > MSD
        rng = np.random.default_rng(10)
        for trial in range(20):
            k = int(rng.integers(2, 6))
            means = {
                f"m{i}": rng.standard_normal(5) * 0.5 + rng.uniform(-1, 1)
                for i in range(k)
            }
            res = rm_anova_tukey(means)
            if res.degenerate:
                continue
            for i in range(k):
                for j in range(i + 1, k):
                    gap = abs(res.means[i] - res.means[j])
                    sig_by_p = res.p_raw[i, j] < 0.05
                    sig_by_msd = gap > res.msd
                    if abs(gap - res.msd) > 1e-9 * max(1.0, res.msd):
                        assert sig_by_p == sig_by_msd, (trial, i, j)

    def test_monotone_in_gap(self):
        # same within-model noise, growing mean separation: p shrinks
        rng = np.random.default_rng(12)
        noise = {m: rng.standard_normal(5) * 0.2 for m in "abc"}
        p_prev = None
        for gap in (0.05, 0.2, 0.5, 1.0):
            res = rm_anova_tukey(
                {"a": noise["a"], "b": noise["b"] + gap, "c": noise["c"] - gap}
            )
            if p_prev is not None:
                assert res.p_raw[0, 1] <= p_prev + 1e-12
            p_prev = res.p_raw[0, 1]

    def test_ci_uses_t_0975_4(self):
        rng = np.random.default_rng(11)
        means = {"a": rng.standard_normal(5), "b": rng.standard_normal(5)}
        res = rm_anova_tukey(means)
        t_crit = t_quantile(0.975, 4)
        assert np.allclose(res.ci_half, t_crit * res.sems)

    def test_single_model_rejected(self):
        with pytest.raises(ValidationError):
            rm_anova_tukey({"a": np.ones(5)})


class TestIcc:
    def test_paper_diagnostic_values(self):
        assert n_eff(0.153) == pytest.approx(15.5, abs=0.05)
        assert n_eff(0.343) == pytest.approx(10.5, abs=0.05)

    def test_nonpositive_icc_keeps_full_n(self):
        assert n_eff(0.0) == 25.0
        assert n_eff(-0.4) == 25.0

    def test_perfect_grouping(self):
        assert icc1([[1.0, 1.0], [2.0, 2.0]]) == 1.0

    def test_no_grouping_structure(self):
        rng = np.random.default_rng(3)
        x = rng.standard_normal((50, 20))
        assert abs(icc1(x)) < 0.1

    def test_single_group_rejected(self):
        with pytest.raises(ValidationError):
            icc1([[1.0, 2.0]])


class TestShapiroWilk:
    def test_uniform_sequence_looks_normal_enough(self):
        res = shapiro_wilk([1.0, 2.0, 3.0, 4.0, 5.0])
        assert res.w > 0.95
        assert res.p > 0.5

    def test_agrees_with_scipy(self):
        from scipy.stats import shapiro as scipy_shapiro

        rng = np.random.default_rng(4)
        for n in (5, 10, 25, 50):
            for _ in range(5):
                x = rng.standard_normal(n)
                ours = shapiro_wilk(x)
                ref = scipy_shapiro(x)
                assert ours.w == pytest.approx(ref.statistic, abs=2e-3)
                assert ours.p == pytest.approx(ref.pvalue, abs=2e-2)

    def test_detects_heavy_skew(self):
        rng = np.random.default_rng(5)
        x = np.exp(rng.standard_normal(30) * 2.0)
        assert shapiro_wilk(x).p < 0.01

    def test_constant_degenerate(self):
        assert shapiro_wilk([2.0] * 10).degenerate

    def test_range_validation(self):
        with pytest.raises(ValidationError):
            shapiro_wilk([1.0, 2.0])
        with pytest.raises(ValidationError):
            shapiro_wilk(np.arange(51.0))


class TestLevene:
    def test_identical_groups(self):
        g = [1.0, 5.0, 3.0, 2.2]
        res = levene([g, list(g)])
        assert res.stat == 0.0 and res.p == 1.0

    def test_huge_variance_ratio(self):
        rng = np.random.default_rng(6)
        a = rng.standard_normal(30)
        b = rng.standard_normal(30) * 100.0
        assert levene([a, b]).p < 1e-6

    def test_same_distribution_usually_insignificant(self):
        rng = np.random.default_rng(7)
        a, b = rng.standard_normal(40), rng.standard_normal(40)
        assert levene([a, b]).p > 0.01

    def test_median_variant(self):
        rng = np.random.default_rng(8)
        a, b = rng.standard_normal(30), rng.standard_normal(30) * 10
        assert levene([a, b], center="median").p < 1e-3

    def test_validation(self):
        with pytest.raises(ValidationError):
            levene([[1.0, 2.0]])
        with pytest.raises(ValidationError):
            levene([[1.0, 2.0], [1.0]])


def wilcoxon_enumeration_oracle(diffs):
    """Exact two-sided p by full sign enumeration (0 diffs dropped)."""
    d = np.asarray(diffs, dtype=float)
    d = d[d != 0]
    m = len(d)
    abs_d = np.abs(d)
    order = np.argsort(abs_d, kind="stable")
    ranks = np.empty(m)
    srt = abs_d[order]
    i = 0
    while i < m:
        j = i
        while j + 1 < m and srt[j + 1] == srt[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2 + 1
        i = j + 1
    w_obs = ranks[d > 0].sum()
    stats = []
    for signs in itertools.product([0, 1], repeat=m):
        stats.append(sum(r for r, s in zip(ranks, signs) if s))
    stats = np.array(stats)
    p = 2 * min((stats <= w_obs).mean(), (stats >= w_obs).mean())
    return w_obs, min(1.0, p)


class TestWilcoxon:
    def test_six_pair_exact_enumeration(self):
        rng = np.random.default_rng(9)
        for _ in range(10):
            d = rng.standard_normal(6)
            w, p, flag = wilcoxon_signed_rank(d)
            w_ref, p_ref = wilcoxon_enumeration_oracle(d)
            assert not flag
            assert w == w_ref
            assert p == pytest.approx(p_ref, abs=1e-12)

    def test_with_ties_against_enumeration(self):
        d = np.array([0.5, -0.5, 1.2, 1.2, -0.3, 2.0, 0.5, -1.2])
        w, p, _ = wilcoxon_signed_rank(d)
        w_ref, p_ref = wilcoxon_enumeration_oracle(d)
        assert w == w_ref
        assert p == pytest.approx(p_ref, abs=1e-12)

    def test_all_positive_constant_minimal_p(self):
        d = np.full(25, 0.01)
        w, p, flag = wilcoxon_signed_rank(d)
        assert w == 25 * 26 / 2
        assert p == pytest.approx(2.0 / 2**25, rel=1e-9)

    def test_zeros_dropped(self):
        d = np.array([0.0, 0.0, 1.0, -2.0, 3.0])
        w, p, _ = wilcoxon_signed_rank(d)
        w_ref, p_ref = wilcoxon_enumeration_oracle(d)
        assert w == w_ref and p == pytest.approx(p_ref, abs=1e-12)

    def test_all_zero_degenerate(self):
        _, _, flag = wilcoxon_signed_rank(np.zeros(10))
        assert flag


class TestPairedBattery:
    def test_identical_scores_degenerate(self):
        a = np.random.default_rng(1).standard_normal((5, 5))
        res = paired_battery(a, a.copy())
        assert res.degenerate
        assert res.delta_mean == 0.0

    def test_constant_shift(self):
        # a dyadic shift on dyadic scores keeps the differences bitwise
        # constant, hitting the degenerate-t branch exactly
        rng = np.random.default_rng(2)
        b = rng.integers(-8, 8, size=(5, 5)) / 4.0
        shift = 2.0**-6
        res = paired_battery(b + shift, b)
        assert res.delta_mean == shift
        assert res.sem == 0.0
        assert np.isnan(res.t_p)  # zero-spread differences: t undefined
        assert res.wilcoxon_p == pytest.approx(2.0 / 2**25, rel=1e-9)

    def test_clear_improvement_detected(self):
        rng = np.random.default_rng(3)
        a = rng.standard_normal((5, 5)) * 0.05 + 1.0
        b = a - (0.2 + rng.standard_normal((5, 5)) * 0.02)
        res = paired_battery(a, b)
        assert res.delta_mean > 0.15
        assert res.t_p < 1e-6
        assert res.wilcoxon_p == pytest.approx(2.0 / 2**25, rel=1e-6)
        assert not res.degenerate

    def test_mean_and_sem_definition(self):
        rng = np.random.default_rng(4)
        a, b = rng.standard_normal((5, 5)), rng.standard_normal((5, 5))
        res = paired_battery(a, b)
        delta = (a - b).ravel()
        assert res.delta_mean == pytest.approx(delta.mean())
        assert res.sem == pytest.approx(delta.std(ddof=1) / np.sqrt(25))


class TestScoreMatrix:
    def make(self):
        sm = ScoreMatrix()
        for r in range(5):
            for f in range(5):
                sm.add("m1", r, f, "N_13", "N", "ccc", 0.9 + 0.001 * r - 0.002 * f)
                sm.add("m1", r, f, "O_10", "N", "ccc", 0.8 + 0.001 * r)
        return sm

    def test_fold_scores_and_pooling(self):
        sm = self.make()
        single = sm.fold_scores("m1", "ccc", strata=[("N_13", "N")])
        assert single.shape == (5, 5)
        assert single[0, 0] == pytest.approx(0.9)
        pooled = sm.fold_scores("m1", "ccc")
        assert pooled[0, 0] == pytest.approx((0.9 + 0.8) / 2)

    def test_missing_cell_errors(self):
        sm = ScoreMatrix()
        sm.add("m1", 0, 0, "ALL", "N", "ccc", 0.5)
        with pytest.raises(ValidationError):
            sm.fold_scores("m1", "ccc")

    def test_csv_round_trip(self, tmp_path):
        sm = self.make()
        path = tmp_path / "scores.csv"
        sm.write_csv(path)
        sm2 = ScoreMatrix.read_csv(path)
        assert sorted(sm2.rows) == sorted(sm.rows)
        header = path.read_text().splitlines()[0]
        assert header == "model,repeat,fold,stratum,metric,value"

    def test_csv_header_validated(self, tmp_path):
        p = tmp_path / "bad.csv"
        p.write_text("a,b,c\n")
        with pytest.raises(ParseError):
            ScoreMatrix.read_csv(p)
