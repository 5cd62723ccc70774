import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from threshmart.diagnostics import (
    RecursiveLeastSquares, calibration_regression, calibration_scatter, default_burn_in,
    lagged_design, lagged_ols_r2, ols_fit, ols_vs_prequential_contrast,
    polynomial_calibration, prequential_predictions, prequential_r2, total_volatility_test)
from threshmart.errors import (DomainError, IncompletePathError, SingularDesignError,
                               UndefinedStatisticError)
from threshmart.stochastic_sim import EnsembleConfig, sample_ensemble
from threshmart.threshold_martingale import differences, ensemble_prob_paths, prob_matrix


@pytest.fixture(scope="module")
def ensemble400():
    return ensemble_prob_paths(sample_ensemble(EnsembleConfig(n_series=400, master_seed=2024)))


@pytest.fixture(scope="module")
def ensemble250():
    return ensemble_prob_paths(sample_ensemble(EnsembleConfig(n_series=250, master_seed=1)))


class TestOls:
    def test_exact_linear(self):
        rng = np.random.default_rng(0)
        x = np.column_stack([np.ones(30), rng.normal(size=30), rng.normal(size=30)])
        y = 2.5 * x[:, 2]
        fit = ols_fit(x, y)
        np.testing.assert_allclose(fit.coef, [0, 0, 2.5], atol=1e-10)
        assert np.max(np.abs(fit.resid)) < 1e-12

    def test_two_points(self):
        fit = ols_fit([[1, 0], [1, 1]], [0, 1])
        np.testing.assert_allclose(fit.coef, [0, 1], atol=1e-15)

    def test_rank_deficiency_names_column(self):
        x = np.column_stack([np.ones(10), np.arange(10.0), 2 * np.arange(10.0), np.ones(10)])
        with pytest.raises(SingularDesignError) as exc:
            ols_fit(x, np.arange(10.0))
        assert exc.value.column == 2
        with pytest.raises(SingularDesignError) as exc:
            ols_fit(np.column_stack([np.ones(5), np.zeros(5)]), np.ones(5))
        assert exc.value.column == 1

    def test_too_few_rows(self):
        with pytest.raises(DomainError):
            ols_fit(np.ones((2, 3)), np.ones(2))

    def test_sandwich_with_equal_residual_magnitudes(self):
        # residuals c * s with s = +-1 orthogonal to both columns
        x = np.column_stack([np.ones(8), [1, 1, 2, 2, 3, 3, 4, 4]])
        s = np.array([1, -1, 1, -1, 1, -1, 1, -1], dtype=float)
        y = x @ [0.3, -1.2] + 0.7 * s
        robust = ols_fit(x, y, robust=True)
        classical = ols_fit(x, y, robust=False)
        np.testing.assert_allclose(robust.resid, 0.7 * s, atol=1e-14)
        n, k = x.shape
        np.testing.assert_allclose(robust.cov, classical.cov * (n - k) / n, rtol=1e-10)
        np.testing.assert_allclose(robust.cov, 0.49 * np.linalg.inv(x.T @ x), rtol=1e-10)

    def test_sandwich_close_to_classical_when_homoscedastic(self):
        rng = np.random.default_rng(1)
        x = np.column_stack([np.ones(10_000), rng.normal(size=10_000)])
        y = x @ [1.0, 2.0] + rng.normal(size=10_000)
        r = ols_fit(x, y, robust=True).se
        c = ols_fit(x, y).se
        assert np.all(np.abs(r / c - 1) < 0.10)


class TestCalibration:
    def test_level_regression_on_diagonal(self, ensemble400):
        rep = calibration_regression(ensemble400, 35, (1,), difference_lag=None)
        assert abs(rep.slope - 1) < 2 * rep.robust_se[1]
        assert abs(rep.intercept) < 2 * rep.robust_se[0]

    def test_corruption_detected(self, ensemble400):
        p = prob_matrix(ensemble400).copy()
        t = 35
        p[:, t] = 0.9 * p[:, t - 1] + 0.05
        rep = calibration_regression(p, t, (2,), difference_lag=1)
        # E(p_t - p_{t-1} | p_{t-2}) = 0.05 - 0.1 p_{t-2} under the corruption
        assert np.max(np.abs(rep.robust_t)) > 4
        assert rep.rejects(0.001)
        assert abs(rep.coef[0] - 0.05) < 3 * rep.robust_se[0]
        assert abs(rep.coef[1] + 0.1) < 3 * rep.robust_se[1]

    def test_constant_regressor_is_singular(self, ensemble400):
        with pytest.raises(SingularDesignError):
            calibration_regression(ensemble400, 25, (2, 25), difference_lag=1)

    def test_constant_ensemble_is_singular(self):
        paths = np.tile(np.linspace(0.2, 0.6, 11), (20, 1))
        with pytest.raises(SingularDesignError):
            calibration_regression(paths, 10, (2,), difference_lag=1)

    def test_lag_validation(self, ensemble400):
        with pytest.raises(DomainError):
            calibration_regression(ensemble400, 35, (3, 2))
        with pytest.raises(DomainError):
            calibration_regression(ensemble400, 35, (2,), difference_lag=2)
        with pytest.raises(DomainError):
            calibration_regression(ensemble400, 35, (36,))
        with pytest.raises(DomainError):
            calibration_regression(ensemble400[:3], 35, (2, 3))

    def test_polynomial_terms(self, ensemble250):
        rep = polynomial_calibration(ensemble250, 35, 36, degree=5)
        assert len(rep.coef) == 6
        assert abs(rep.robust_t[1]) > 10  # linear term carries the signal
        assert rep.p_value > 0.01  # higher-order terms jointly insignificant

    def test_scatter(self, ensemble400):
        sc = calibration_scatter(ensemble400, 34, 35)
        assert 0.95 <= sc.slope <= 1.05
        assert len(sc.x) == 400 and not sc.degenerate

    def test_scatter_from_start_is_degenerate(self, ensemble250):
        sc = calibration_scatter(ensemble250, 0, 25)
        assert np.allclose(sc.x, 0.75)
        assert sc.degenerate and sc.slope is None

    def test_scatter_single_series(self, ensemble250):
        sc = calibration_scatter(ensemble250[:1], 30, 31)
        assert len(sc.x) == 1 and sc.slope is None


def terminal_paths(zeros, n):
    return [np.array([0.75, 0.0 if j < zeros else 1.0]) for j in range(n)]


class TestTotalVolatility:
    def test_target(self, ensemble250):
        rep = total_volatility_test(ensemble250, 0.75)
        assert rep.target == 0.1875
        assert rep.z == pytest.approx((rep.mean_total - 0.1875) / rep.se)

    def test_moderate_shortfall_passes(self):
        rep = total_volatility_test(terminal_paths(58, 250), 0.75)
        assert rep.mean_total == pytest.approx(0.0625 + 0.5 * 58 / 250)
        assert round(rep.mean_total, 2) == 0.18
        assert abs(rep.z) < 1 and rep.passed

    def test_all_ones_fails(self):
        rep = total_volatility_test(terminal_paths(0, 50), 0.75)
        assert rep.mean_total == 0.0625
        assert rep.z < -3 and not rep.passed

    def test_two_statistics_agree_on_martingales(self, ensemble250):
        rep = total_volatility_test(ensemble250, 0.75)
        assert rep.consistent
        assert abs(rep.z_qv) < 3

    def test_inconsistency_flagged(self):
        # jumps straight from 0.75 to the outcome then back: S_T far exceeds (p_T - pi)^2
        paths = [np.array([0.75, 0.0, 1.0, 0.0, 1.0]) for _ in range(30)]
        paths += [np.array([0.75, 1.0, 0.0, 1.0, 0.0]) for _ in range(10)]
        rep = total_volatility_test(paths, 0.75)
        assert not rep.consistent

    def test_incomplete_paths(self):
        paths = terminal_paths(3, 10)
        paths[4] = np.array([0.75, 0.6])
        paths[7] = np.array([0.75, 0.2])
        with pytest.raises(IncompletePathError) as exc:
            total_volatility_test(paths, 0.75)
        assert exc.value.series == [4, 7]


class TestPrequential:
    def test_rls_matches_batch_ols(self):
        rng = np.random.default_rng(5)
        d = rng.normal(size=50)
        x, y = lagged_design(d, 3)
        rls = RecursiveLeastSquares(4)
        for i in range(len(y)):
            if i >= 4:
                batch = np.linalg.lstsq(x[:i], y[:i], rcond=None)[0]
                np.testing.assert_allclose(rls.coef, batch, rtol=0, atol=1e-8)
            rls.update(x[i], y[i])

    def test_prediction_uses_only_the_past(self):
        rng = np.random.default_rng(6)
        d = rng.normal(size=40)
        base = prequential_predictions(d, 2)
        d2 = d.copy()
        d2[30:] += 100.0
        # once the fit is identified (3 rows for 3 parameters) the global RMS
        # rescaling only moves predictions through the ridge
        np.testing.assert_allclose(prequential_predictions(d2, 2)[3:28], base[3:28], atol=1e-6)

    def test_martingale_ensemble_mostly_negative(self, ensemble250):
        rep = ols_vs_prequential_contrast([differences(p) for p in ensemble250], 4)
        assert rep.fraction_negative > 0.8
        assert rep.median_ols > rep.median_prequential

    def test_autoregressive_differences(self):
        # population R^2 of a stationary AR(1) with coefficient 0.9 is 0.81
        vals = []
        for seed in range(5):
            rng = np.random.default_rng(seed)
            e = 0.01 * rng.normal(size=600)
            d = np.zeros(600)
            for t in range(1, 600):
                d[t] = 0.9 * d[t - 1] + e[t]
            vals.append(prequential_r2(d[100:], 4))
        assert np.mean(vals) == pytest.approx(0.81, abs=0.05)
        assert min(vals) > 0

    def test_spike_reversal(self):
        # zeros, then +1, then -1.  With lag 1 the OLS intercept is 1/m over the
        # m rows with a zero lag, the last row is fitted exactly, so
        # R^2 = 1 - (1 - 1/m) / 2.  The prequential fit cannot see either jump coming.
        T = 40
        d = np.zeros(T)
        d[-2], d[-1] = 1.0, -1.0
        m = T - 2
        assert lagged_ols_r2(d, 1) == pytest.approx(1 - (1 - 1 / m) / 2, abs=1e-12)
        assert prequential_r2(d, 1) <= 0

    def test_homoscedastic_gap_small(self):
        rng = np.random.default_rng(8)
        diffs = [rng.normal(size=1000) for _ in range(40)]
        rep = ols_vs_prequential_contrast(diffs, 4)
        assert abs(rep.median_ols - rep.median_prequential) < 0.05

    def test_errors(self):
        with pytest.raises(UndefinedStatisticError):
            prequential_r2(np.zeros(40), 4)
        with pytest.raises(DomainError):
            prequential_r2(np.ones(40), 4, burn_in=5)
        with pytest.raises(DomainError):
            prequential_r2(np.ones(14), 4)
        assert default_burn_in(4) == 14

    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.floats(-1, 1), min_size=30, max_size=60),
           st.floats(1e-3, 1e3))
    def test_bounded_and_scale_invariant(self, d, c):
        d = np.asarray(d)
        try:
            r = prequential_r2(d, 2)
        except UndefinedStatisticError:
            return
        assert r <= 1
        assert prequential_r2(c * d, 2) == pytest.approx(r, rel=1e-6, abs=1e-9)
