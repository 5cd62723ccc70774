"""Threshold probability paths and their volatility functionals.

A threshold martingale is ``p_t = P(Y_T <= tau | data through t)``.  For an
AR(1) the conditional law of ``Y_T`` is normal with mean ``rho**h * y_t``
and variance ``sigma**2 (1 - rho**(2h)) / (1 - rho**2)`` where ``h = T - t``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .stochastic_sim import Ensemble, SeriesPath, norm_cdf, stationary_sd


@dataclass(frozen=True)
class ProbPath:
    probs: np.ndarray  # p_0..p_T
    tau: float = float("nan")
    pi: float = float("nan")

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if p.ndim != 1 or len(p) == 0:
            raise DomainError("probs must be a non-empty 1-d sequence")
        if np.any((p < 0) | (p > 1)) or not np.all(np.isfinite(p)):
            raise DomainError("probabilities must lie in [0, 1]")
        object.__setattr__(self, "probs", p)

    @property
    def terminal(self) -> float:
        return self.probs[-1]

    @property
    def is_complete(self) -> bool:
        return self.probs[-1] in (0.0, 1.0)

    def __len__(self):
        return len(self.probs)


@dataclass(frozen=True)
class VolatilityPath:
    s_values: np.ndarray
    v_values: np.ndarray


def _probs(p) -> np.ndarray:
    return p.probs if isinstance(p, ProbPath) else np.asarray(p, dtype=float)


def threshold_prob_ar1(path: SeriesPath, t: int, tau: float) -> float:
    """``P(y_T <= tau | y_1..y_t)`` for a stationary Gaussian AR(1)."""
    T = path.T
    if not 1 <= t <= T:
        raise IndexError(f"t must lie in 1..{T}, got {t}")
    y_t = path.values[t - 1]
    h = T - t
    if h == 0:
        return float(y_t <= tau)
    rho, sigma = path.spec.rho, path.spec.sigma_eps
    s_h = sigma * np.sqrt((1.0 - rho ** (2 * h)) / (1.0 - rho * rho))
    return float(norm_cdf((tau - rho ** h * y_t) / s_h))


def _prob_matrix_ar1(y: np.ndarray, rho: float, sigma: float, tau: float) -> np.ndarray:
    # vectorised threshold_path for one series; returns p_0..p_T
    T = len(y)
    h = T - np.arange(1, T)  # horizons for t = 1..T-1
    s_h = sigma * np.sqrt((1.0 - rho ** (2 * h)) / (1.0 - rho * rho))
    p = np.empty(T + 1)
    p[0] = norm_cdf(tau / stationary_sd(rho, sigma))
    p[1:T] = norm_cdf((tau - rho ** h * y[:-1]) / s_h)
    p[T] = float(y[-1] <= tau)
    return p


def threshold_path(path: SeriesPath, tau: float) -> ProbPath:
    """Full path ``p_0..p_T``; ``p_0`` is the stationary probability of ``{Y <= tau}``."""
    p = _prob_matrix_ar1(path.values, path.spec.rho, path.spec.sigma_eps, tau)
    return ProbPath(probs=p, tau=tau, pi=p[0])


def ensemble_prob_paths(ensemble: Ensemble) -> list:
    """Threshold paths for every series of an ensemble at its own threshold."""
    return [ProbPath(probs=_prob_matrix_ar1(sp.values, sp.spec.rho, sp.spec.sigma_eps, tau),
                     tau=tau, pi=ensemble.target_pi)
            for sp, tau in zip(ensemble.paths, ensemble.taus)]


def prob_matrix(paths) -> np.ndarray:
    """Stack equal-length paths into an ``(n_series, T + 1)`` array."""
    rows = [_probs(p) for p in paths]
    lengths = {len(r) for r in rows}
    if len(lengths) != 1:
        raise DomainError(f"paths differ in length: {sorted(lengths)}")
    return np.vstack(rows)


def differences(p) -> np.ndarray:
    """Martingale differences ``d_t = p_t - p_{t-1}``, t = 1..T."""
    p = _probs(p)
    if len(p) < 2:
        raise DomainError("need at least two probabilities to difference")
    return np.diff(p)


def quadratic_variation(p) -> np.ndarray:
    """Running sums ``S_t`` of squared differences, with ``S_0 = 0``."""
    p = _probs(p)
    s = np.zeros(len(p))
    if len(p) > 1:
        s[1:] = np.cumsum(np.diff(p) ** 2)
    return s


def compensated_volatility(p) -> np.ndarray:
    """``V_t = S_t + p_t (1 - p_t)``, a martingale when ``p`` is one."""
    p = _probs(p)
    return quadratic_variation(p) + p * (1.0 - p)


def volatility_path(p) -> VolatilityPath:
    return VolatilityPath(s_values=quadratic_variation(p), v_values=compensated_volatility(p))


def volatility_increments(p) -> np.ndarray:
    """``V_t - V_{t-1}`` via ``2 (p_t - p_{t-1}) (1/2 - p_{t-1})``."""
    p = _probs(p)
    return 2.0 * np.diff(p) * (0.5 - p[:-1])
