"""AR(1) simulation, closed-form forecasts and a synthetic game generator.

All randomness flows through :func:`numpy.random.default_rng`.  Ensembles
derive one seed per series from ``(master_seed, index)`` with
:class:`numpy.random.SeedSequence`, whose hashing is stable across numpy
versions and platforms, so series can be regenerated individually.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize, signal, special

from .errors import DomainError, StationarityError
from .games import GamePath, game_times


def norm_cdf(x):
    """Standard normal CDF (vectorised; exact to double precision in the tails)."""
    return special.ndtr(x)


def norm_ppf(q):
    """Standard normal quantile function."""
    return special.ndtri(q)


@dataclass(frozen=True)
class ArSpec:
    rho: float
    sigma_eps: float = 1.0
    T: int = 40

    def __post_init__(self):
        if not abs(self.rho) < 1:
            raise StationarityError(f"|rho| must be < 1 for a stationary AR(1), got {self.rho}")
        if not self.sigma_eps > 0:
            raise DomainError(f"sigma_eps must be positive, got {self.sigma_eps}")
        if int(self.T) != self.T or self.T < 1:
            raise DomainError(f"horizon T must be an integer >= 1, got {self.T}")


@dataclass(frozen=True)
class SeriesPath:
    values: np.ndarray  # y_1..y_T
    spec: ArSpec
    seed: int

    @property
    def T(self) -> int:
        return self.spec.T


@dataclass(frozen=True)
class EnsembleConfig:
    n_series: int = 250
    beta_a: float = 8.0
    beta_b: float = 2.0
    target_pi: float = 0.75
    T: int = 40
    sigma_eps: float = 1.0
    master_seed: int = 0

    def __post_init__(self):
        if self.n_series < 1:
            raise DomainError(f"n_series must be >= 1, got {self.n_series}")
        if not (self.beta_a > 0 and self.beta_b > 0):
            raise DomainError("Beta shape parameters must be positive")
        if not 0 < self.target_pi < 1:
            raise DomainError(f"target_pi must lie in (0, 1), got {self.target_pi}")


@dataclass(frozen=True)
class Ensemble:
    paths: tuple
    rhos: np.ndarray
    taus: np.ndarray
    target_pi: float

    def __len__(self):
        return len(self.paths)


def stationary_sd(rho: float, sigma_eps: float = 1.0) -> float:
    """Marginal standard deviation ``sigma_eps / sqrt(1 - rho**2)``."""
    if not abs(rho) < 1:
        raise StationarityError(f"|rho| must be < 1, got {rho}")
    if not sigma_eps > 0:
        raise DomainError(f"sigma_eps must be positive, got {sigma_eps}")
    return sigma_eps / math.sqrt(1.0 - rho * rho)


def simulate_ar1(spec: ArSpec, seed: int) -> SeriesPath:
    """Simulate ``y_1..y_T`` with ``y_1`` drawn from the stationary law.

    Uses exactly ``T`` standard normal draws ``z`` from the generator:
    ``y_1 = sd * z_1`` and ``y_t = rho * y_{t-1} + sigma_eps * z_t``.
    """
    if not isinstance(spec, ArSpec):
        spec = ArSpec(*spec)
    rng = np.random.default_rng(seed)
    z = rng.standard_normal(spec.T)
    e = spec.sigma_eps * z
    e[0] = stationary_sd(spec.rho, spec.sigma_eps) * z[0]
    y = signal.lfilter([1.0], [1.0, -spec.rho], e)
    return SeriesPath(values=y, spec=spec, seed=seed)


def conditional_forecast(path: SeriesPath, t: int) -> float:
    """Optimal point forecast of ``y_T`` given data through time ``t`` (1-based)."""
    T = path.T
    if not 1 <= t <= T:
        raise IndexError(f"t must lie in 1..{T}, got {t}")
    return path.spec.rho ** (T - t) * path.values[t - 1]


def forecast_variance_components(spec: ArSpec) -> np.ndarray:
    """Variances of the forecast revisions ``Yhat_{T|s} - Yhat_{T|s-1}``, s = 1..T."""
    s = np.arange(1, spec.T + 1)
    return spec.sigma_eps ** 2 * spec.rho ** (2 * (spec.T - s))


def unexplained_variance(spec: ArSpec) -> float:
    """Part of ``Var(y_T)`` already fixed before ``y_1`` is observed."""
    return spec.rho ** (2 * spec.T) * stationary_sd(spec.rho, spec.sigma_eps) ** 2


def threshold_for_quantile(rho: float, sigma_eps: float, pi: float) -> float:
    """Threshold ``tau`` with ``P(Y <= tau) = pi`` under the stationary law."""
    if not 0 < pi < 1:
        raise DomainError(f"pi must lie in (0, 1), got {pi}")
    return float(norm_ppf(pi)) * stationary_sd(rho, sigma_eps)


def series_seed(master_seed: int, index: int) -> int:
    """Stable 64-bit seed for series ``index`` of an ensemble."""
    ss = np.random.SeedSequence([int(master_seed), int(index)])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def sample_ensemble(config: EnsembleConfig) -> Ensemble:
    """Heterogeneous AR(1) ensemble sharing one threshold probability.

    Coefficients ``rho_j ~ Beta(a, b)`` come from a generator seeded by
    ``master_seed`` alone (the j-th draw belongs to series j); each path is
    then simulated from ``series_seed(master_seed, j)``.
    """
    rng = np.random.default_rng(np.random.SeedSequence([int(config.master_seed)]))
    rhos = rng.beta(config.beta_a, config.beta_b, size=config.n_series)
    paths, taus = [], np.empty(config.n_series)
    for j, rho in enumerate(rhos):
        spec = ArSpec(rho=float(rho), sigma_eps=config.sigma_eps, T=config.T)
        paths.append(simulate_ar1(spec, series_seed(config.master_seed, j)))
        taus[j] = threshold_for_quantile(spec.rho, spec.sigma_eps, config.target_pi)
    return Ensemble(paths=tuple(paths), rhos=rhos, taus=taus, target_pi=config.target_pi)


def simulate_game(drift: float, step_sd: float, n_steps: int = 192,
                  home_advantage_prob: float = 0.5, seed=None,
                  game_id: str = "g0", season: str = "") -> GamePath:
    """Integer random-walk score difference for one synthetic game.

    Each 15-second step adds ``round(Normal(drift, step_sd**2))`` points to
    the home-minus-away margin.  A tie after the last step is broken by one
    extra possession that goes to the home team with probability
    ``home_advantage_prob``.
    """
    if n_steps < 1:
        raise DomainError(f"n_steps must be >= 1, got {n_steps}")
    if not step_sd > 0:
        raise DomainError(f"step_sd must be positive, got {step_sd}")
    if not 0 <= home_advantage_prob <= 1:
        raise DomainError("home_advantage_prob must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    steps = np.rint(rng.normal(drift, step_sd, size=n_steps))
    tie_draw = rng.random()
    x = np.concatenate([[0.0], np.cumsum(steps)])
    if x[-1] > 0:
        home_win = 1
    elif x[-1] < 0:
        home_win = 0
    else:
        home_win = int(tie_draw < home_advantage_prob)
    return GamePath(game_id=game_id, season=season, times=game_times(n_steps),
                    score_diff=x, home_win=home_win)


def _step_pmf(drift, step_sd, width=12.0):
    lo = math.floor(drift - width * step_sd) - 1
    hi = math.ceil(drift + width * step_sd) + 1
    k = np.arange(lo, hi + 1)
    pmf = norm_cdf((k + 0.5 - drift) / step_sd) - norm_cdf((k - 0.5 - drift) / step_sd)
    return lo, pmf


def home_win_probability(drift: float, step_sd: float, n_steps: int = 192,
                         home_advantage_prob: float = 0.5) -> float:
    """Exact home-win probability of :func:`simulate_game` by convolution."""
    lo, pmf = _step_pmf(drift, step_sd)
    total = np.array([1.0])
    offset = 0
    power, p_lo, n = pmf, lo, n_steps
    while n:  # binary powering of the step distribution
        if n & 1:
            total = np.clip(signal.fftconvolve(total, power), 0, None)
            offset += p_lo
        n >>= 1
        if n:
            power = np.clip(signal.fftconvolve(power, power), 0, None)
            p_lo *= 2
    k = offset + np.arange(len(total))
    total /= total.sum()
    return float(total[k > 0].sum() + home_advantage_prob * total[k == 0].sum())


def calibrate_drift(target: float, step_sd: float, n_steps: int = 192,
                    home_advantage_prob: float = 0.5) -> float:
    """Per-step drift giving an exact home-win probability of ``target``."""
    if not 0 < target < 1:
        raise DomainError(f"target must lie in (0, 1), got {target}")

    def gap(d):
        return home_win_probability(d, step_sd, n_steps, home_advantage_prob) - target

    bound = 4.0 * step_sd
    return optimize.brentq(gap, -bound, bound, xtol=1e-14)


def make_games(n_games: int, drift: float, step_sd: float, seed: int,
               season: str = "", n_steps: int = 192,
               home_advantage_prob: float = 0.5, id_prefix: str = "g") -> list:
    """A corpus of independent synthetic games, game ``j`` seeded by ``(seed, j)``."""
    if n_games < 1:
        raise DomainError(f"n_games must be >= 1, got {n_games}")
    return [
        simulate_game(drift, step_sd, n_steps, home_advantage_prob,
                      seed=series_seed(seed, j), game_id=f"{id_prefix}{j:05d}", season=season)
        for j in range(n_games)
    ]
