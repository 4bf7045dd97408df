import numpy as np
import pytest

from qtakit.errors import NumericError, ValidationError
from qtakit.metrics import bootstrap_ci_r2, ccc, r2


class TestCcc:
    def test_perfect_agreement(self):
        assert ccc([0.0, 1.0, 2.0], [0.0, 1.0, 2.0]) == 1.0

    def test_shifted_line_hand_value(self):
        # cov = 2/3, var = 2/3 each, bias = 1 -> 2*(2/3)/(7/3) = 4/7
        assert abs(ccc([0.0, 1.0, 2.0], [1.0, 2.0, 3.0]) - 4.0 / 7.0) < 1e-12

    def test_anti_correlated(self):
        assert abs(ccc([0.0, 1.0, 2.0], [2.0, 1.0, 0.0]) + 1.0) < 1e-12

    def test_symmetric(self):
        rng = np.random.default_rng(0)
        y, h = rng.standard_normal(50), rng.standard_normal(50)
        assert abs(ccc(y, h) - ccc(h, y)) < 1e-14

    def test_bounded(self):
        rng = np.random.default_rng(1)
        for _ in range(200):
            y = rng.standard_normal(10) * rng.uniform(0.1, 10)
            h = rng.standard_normal(10) * rng.uniform(0.1, 10) + rng.uniform(-5, 5)
            assert abs(ccc(y, h)) <= 1.0 + 1e-12

    def test_constant_vectors(self):
        assert ccc([2.0, 2.0, 2.0], [2.0, 2.0, 2.0]) == 1.0
        assert ccc([2.0, 2.0, 2.0], [3.0, 3.0, 3.0]) == 0.0

    def test_too_short(self):
        with pytest.raises(ValidationError):
            ccc([1.0], [1.0])


class TestR2:
    def test_mean_predictor_is_zero(self):
        y = np.array([1.0, 2.0, 3.0, 6.0])
        assert abs(r2(y, np.full(4, y.mean()))) < 1e-15

    def test_perfect_is_one(self):
        y = np.array([1.0, 2.0, 3.0])
        assert r2(y, y) == 1.0

    def test_zero_variance_errors(self):
        with pytest.raises(NumericError):
            r2([1.0, 1.0, 1.0], [1.0, 2.0, 3.0])


class TestBootstrap:
    def test_perfect_prediction_ci_is_unit(self):
        y = np.arange(10.0)
        lo, hi = bootstrap_ci_r2(y, y, resamples=200, seed=3)
        assert lo == 1.0 and hi == 1.0

    def test_matches_independent_second_pass(self):
        rng = np.random.default_rng(12)
        y = rng.standard_normal(20)
        yhat = y + rng.standard_normal(20) * 0.4
        lo, hi = bootstrap_ci_r2(y, yhat, resamples=500, seed=99)

        # independent re-implementation of the resampling loop
        rng2 = np.random.default_rng(99)
        vals = []
        for _ in range(500):
            idx = rng2.integers(0, 20, size=20)
            ys, hs = y[idx], yhat[idx]
            sst = ((ys - ys.mean()) ** 2).sum()
            if sst == 0:
                continue
            vals.append(1.0 - ((ys - hs) ** 2).sum() / sst)
        lo2, hi2 = np.quantile(vals, [0.025, 0.975])
        assert lo == pytest.approx(lo2, abs=1e-12)
        assert hi == pytest.approx(hi2, abs=1e-12)

    def test_ci_brackets_point_estimate(self):
        rng = np.random.default_rng(5)
        y = rng.standard_normal(40)
        yhat = y * 0.8 + rng.standard_normal(40) * 0.3
        point = r2(y, yhat)
        lo, hi = bootstrap_ci_r2(y, yhat, resamples=1000, seed=7)
        assert lo <= point <= hi
