import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, optimize

from threshmart.errors import DomainError, StationarityError
from threshmart.stochastic_sim import (
    ArSpec, EnsembleConfig, calibrate_drift, conditional_forecast,
    forecast_variance_components, home_win_probability, make_games, norm_cdf, norm_ppf,
    sample_ensemble, series_seed, simulate_ar1, simulate_game, stationary_sd,
    threshold_for_quantile, unexplained_variance)


def quad_cdf(x):
    """Normal CDF by numerical integration of the density."""
    dens = lambda u: math.exp(-0.5 * u * u) / math.sqrt(2 * math.pi)
    if x < 0:
        return integrate.quad(dens, -np.inf, x, epsabs=1e-14, epsrel=1e-13)[0]
    return 0.5 + integrate.quad(dens, 0, x, epsabs=1e-14, epsrel=1e-13)[0]


class TestNormal:
    @pytest.mark.parametrize("x", [-8.0, -3.1, -1.0, -0.2, 0.0, 0.6, 1.0, 2.5, 6.0])
    def test_cdf_against_quadrature(self, x):
        assert abs(norm_cdf(x) - quad_cdf(x)) < 1e-10

    @pytest.mark.parametrize("q", [1e-6, 0.01, 0.25, 0.5, 0.75, 0.975])
    def test_ppf_against_root_finding(self, q):
        root = optimize.brentq(lambda x: quad_cdf(x) - q, -10, 10, xtol=1e-14)
        assert abs(norm_ppf(q) - root) < 1e-9


class TestAr1:
    def test_rho_zero_is_raw_draws(self):
        path = simulate_ar1(ArSpec(0.0, 1.0, 5), seed=123)
        z = np.random.default_rng(123).standard_normal(5)
        assert np.array_equal(path.values, z)

    def test_seed_determinism(self):
        a = simulate_ar1(ArSpec(0.9, 2.0, 50), seed=9)
        b = simulate_ar1(ArSpec(0.9, 2.0, 50), seed=9)
        assert a.values.tobytes() == b.values.tobytes()

    def test_recursion(self):
        spec = ArSpec(0.7, 0.5, 30)
        path = simulate_ar1(spec, seed=4)
        z = np.random.default_rng(4).standard_normal(30)
        y = np.empty(30)
        y[0] = stationary_sd(0.7, 0.5) * z[0]
        for t in range(1, 30):
            y[t] = 0.7 * y[t - 1] + 0.5 * z[t]
        np.testing.assert_allclose(path.values, y, rtol=0, atol=1e-14)

    def test_terminal_variance_monte_carlo(self):
        spec = ArSpec(0.8, 1.0, 10)
        yT = np.array([simulate_ar1(spec, seed=s).values[-1] for s in range(20_000)])
        target = 1 / 0.36
        # standard error of a sample variance of normals: var * sqrt(2/(n-1))
        se = target * math.sqrt(2 / (len(yT) - 1))
        assert abs(yT.var(ddof=1) - target) < 3 * se

    @pytest.mark.parametrize("rho", [1.0, -1.0, 1.2])
    def test_nonstationary_rejected(self, rho):
        with pytest.raises(StationarityError):
            ArSpec(rho, 1.0, 10)

    def test_bad_horizon(self):
        with pytest.raises(DomainError):
            ArSpec(0.5, 1.0, 0)
        with pytest.raises(DomainError):
            ArSpec(0.5, 0.0, 5)


class TestClosedForms:
    def test_stationary_sd(self):
        assert stationary_sd(0.0, 1.0) == 1.0
        assert stationary_sd(0.8, 1.0) == pytest.approx(1.666667, abs=1e-6)
        assert stationary_sd(0.995, 1.0) == pytest.approx(10.0125, abs=1e-3)
        with pytest.raises(DomainError):
            stationary_sd(1.0, 1.0)

    def test_conditional_forecast(self):
        spec = ArSpec(0.8, 1.0, 40)
        path = simulate_ar1(spec, seed=1)
        assert conditional_forecast(path, 40) == path.values[-1]
        values = np.zeros(40)
        values[0] = 1.0
        from threshmart.stochastic_sim import SeriesPath
        unit = SeriesPath(values, spec, 0)
        assert conditional_forecast(unit, 1) == pytest.approx(0.8 ** 39)
        assert conditional_forecast(unit, 1) < 2e-4
        with pytest.raises(IndexError):
            conditional_forecast(path, 0)
        with pytest.raises(IndexError):
            conditional_forecast(path, 41)

    def test_conditional_forecast_memoryless(self):
        path = simulate_ar1(ArSpec(0.0, 1.0, 8), seed=2)
        assert all(conditional_forecast(path, t) == 0 for t in range(1, 8))

    def test_threshold_for_quantile(self):
        assert threshold_for_quantile(0.3, 1.0, 0.5) == 0.0
        assert threshold_for_quantile(0.0, 1.0, 0.75) == pytest.approx(0.67449, abs=1e-4)
        assert threshold_for_quantile(0.8, 1.0, 0.75) == pytest.approx(1.12415, abs=1e-4)
        for pi in (0.0, 1.0, -0.1):
            with pytest.raises(DomainError):
                threshold_for_quantile(0.5, 1.0, pi)

    @given(rho=st.floats(-0.999, 0.999), sigma=st.floats(0.01, 100.0),
           T=st.integers(1, 500))
    def test_variance_decomposition(self, rho, sigma, T):
        spec = ArSpec(rho, sigma, T)
        total = forecast_variance_components(spec).sum() + unexplained_variance(spec)
        assert total == pytest.approx(stationary_sd(rho, sigma) ** 2, rel=1e-12, abs=1e-300)

    @settings(max_examples=50)
    @given(rho=st.floats(-0.99, 0.99), sigma=st.floats(0.1, 10.0),
           pi=st.floats(0.001, 0.999))
    def test_threshold_has_requested_probability(self, rho, sigma, pi):
        tau = threshold_for_quantile(rho, sigma, pi)
        assert norm_cdf(tau / stationary_sd(rho, sigma)) == pytest.approx(pi, rel=1e-12)


class TestEnsemble:
    def test_beta_moments(self):
        ens = sample_ensemble(EnsembleConfig(n_series=10_000, master_seed=3, T=2))
        assert abs(ens.rhos.mean() - 0.8) < 3 * 0.12 / 100
        sd = math.sqrt(8 * 2 / (10 ** 2 * 11))  # Beta(8,2) sd = 0.1206
        assert ens.rhos.std() == pytest.approx(sd, abs=0.005)
        assert ens.rhos.std() == pytest.approx(0.12, abs=0.01)

    def test_quantile_hit_rate(self):
        ens = sample_ensemble(EnsembleConfig(n_series=10_000, master_seed=5))
        hits = np.mean([p.values[-1] <= tau for p, tau in zip(ens.paths, ens.taus)])
        se = math.sqrt(0.75 * 0.25 / 10_000)
        assert abs(hits - 0.75) < 3 * se

    def test_taus_solve_quantile_equation(self):
        ens = sample_ensemble(EnsembleConfig(n_series=200, master_seed=6))
        for p, tau in zip(ens.paths, ens.taus):
            prob = norm_cdf(tau / stationary_sd(p.spec.rho, p.spec.sigma_eps))
            assert prob == pytest.approx(0.75, rel=1e-12)

    def test_series_regenerate_individually(self):
        cfg = EnsembleConfig(n_series=20, master_seed=77)
        ens = sample_ensemble(cfg)
        again = simulate_ar1(ens.paths[13].spec, series_seed(77, 13))
        assert np.array_equal(again.values, ens.paths[13].values)
        assert ens.paths[13].seed == series_seed(77, 13)

    def test_deterministic(self):
        a = sample_ensemble(EnsembleConfig(n_series=30, master_seed=8))
        b = sample_ensemble(EnsembleConfig(n_series=30, master_seed=8))
        assert np.array_equal(np.vstack([p.values for p in a.paths]),
                              np.vstack([p.values for p in b.paths]))
        assert np.array_equal(a.rhos, b.rhos)

    def test_empty_rejected(self):
        with pytest.raises(DomainError):
            EnsembleConfig(n_series=0)


def brute_force_home_win(drift, step_sd, n_steps, adv):
    """Home-win probability by direct repeated convolution (no powering)."""
    k = np.arange(-15, 16)
    pmf = norm_cdf((k + 0.5 - drift) / step_sd) - norm_cdf((k - 0.5 - drift) / step_sd)
    dist = np.array([1.0])
    for _ in range(n_steps):
        dist = np.convolve(dist, pmf)
    support = -15 * n_steps + np.arange(len(dist))
    return dist[support > 0].sum() + adv * dist[support == 0].sum()


class TestGames:
    def test_step_sd_must_be_positive(self):
        with pytest.raises(DomainError):
            simulate_game(0.0, 0.0, 192, 0.5, seed=1)
        with pytest.raises(DomainError):
            simulate_game(0.0, 1.0, 0, 0.5, seed=1)

    def test_grid_and_start(self):
        g = simulate_game(0.01, 0.9, 192, 0.5, seed=3)
        assert g.score_diff[0] == 0
        assert len(g.times) == 193
        assert g.times[24] == 6.0
        assert g.times[-1] == pytest.approx(47.9833, abs=1e-4)
        assert np.all(g.score_diff == np.round(g.score_diff))

    def test_label_follows_final_margin(self):
        for s in range(200):
            g = simulate_game(0.0, 0.9, 192, 0.5, seed=s)
            if g.score_diff[-1] != 0:
                assert g.home_win == int(g.score_diff[-1] > 0)

    def test_exact_probability_matches_brute_force(self):
        for drift, sd, n in [(0.0, 0.9, 20), (0.05, 1.3, 30), (-0.1, 0.6, 12)]:
            assert home_win_probability(drift, sd, n, 0.5) == pytest.approx(
                brute_force_home_win(drift, sd, n, 0.5), abs=1e-12)

    def test_symmetric_drift(self):
        assert home_win_probability(0.0, 0.9, 192, 0.5) == pytest.approx(0.5, abs=1e-12)
        games = make_games(10_000, 0.0, 0.9, seed=11)
        rate = np.mean([g.home_win for g in games])
        assert abs(rate - 0.5) < 3 * math.sqrt(0.25 / 10_000)

    def test_calibrated_drift(self):
        drift = calibrate_drift(0.585, 0.9)
        assert drift > 0
        assert home_win_probability(drift, 0.9) == pytest.approx(0.585, abs=1e-9)
        games = make_games(10_000, drift, 0.9, seed=12)
        rate = np.mean([g.home_win for g in games])
        assert abs(rate - 0.585) < 3 * math.sqrt(0.585 * 0.415 / 10_000)

    def test_deterministic(self):
        a = simulate_game(0.02, 0.9, 192, 0.5, seed=99)
        b = simulate_game(0.02, 0.9, 192, 0.5, seed=99)
        assert np.array_equal(a.score_diff, b.score_diff) and a.home_win == b.home_win
