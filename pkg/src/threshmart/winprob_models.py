"""In-game win probability: pooled logistic models and their evaluation.

Two models of ``P(home win | score difference X at game time t)``:

* simple:   ``g(a0 + a1 X)``
* weighted: ``g(b(t) + w(t) X)`` with ``b`` and ``w`` polynomials of degree
  ``l`` in game time, expressed in a basis orthonormal over the training grid.

Both are fitted by pooling every (game, time) cell, which treats cells within
a game as independent; the classical standard errors are therefore too small.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .diagnostics import check_rank
from .errors import DivergenceError, DomainError, SingularDesignError
from .games import GamePath
from .martingale_filter import FilterModel, apply_filter, fit_filter
from .polybasis import PolyBasis
from .threshold_martingale import ProbPath

POOLED_CAVEAT = ("pooled fit: cells within a game are dependent, so these "
                 "standard errors are too small")
PRIOR = 0.5


# ---------------------------------------------------------------------------
# logistic regression by IRLS
# ---------------------------------------------------------------------------

@dataclass
class LogisticResult:
    coef: np.ndarray
    cov: np.ndarray
    loglik_history: list
    n_iter: int
    n_obs: int

    @property
    def se(self) -> np.ndarray:
        return np.sqrt(np.diag(self.cov))

    @property
    def loglik(self) -> float:
        return self.loglik_history[-1]


def _loglik(eta, y):
    return float(np.sum(y * eta - np.logaddexp(0.0, eta)))


def logistic_fit(design, labels, max_iter: int = 100, tol: float = 1e-10,
                 guard: float = 50.0) -> LogisticResult:
    """Maximum likelihood logistic regression by iteratively reweighted least squares.

    Newton steps are halved until the log-likelihood does not decrease, so
    ``loglik_history`` is nondecreasing.  Stops when the largest coefficient
    change is below ``tol``.  Any coefficient beyond ``guard`` in absolute
    value is taken as a sign of separation and raises
    :class:`DivergenceError`.
    """
    x = np.asarray(design, dtype=float)
    y = np.asarray(labels, dtype=float)
    if x.ndim != 2 or x.shape[0] != len(y):
        raise DomainError("design must be 2-d with one row per label")
    if not np.all(np.isfinite(x)):
        raise DomainError("design contains non-finite values")
    if not np.all((y == 0) | (y == 1)):
        raise DomainError("labels must be 0/1")
    check_rank(x)
    coef = np.zeros(x.shape[1])
    eta = x @ coef
    history = [_loglik(eta, y)]
    for it in range(1, max_iter + 1):
        mu = special.expit(eta)
        w = mu * (1.0 - mu)
        info = (x * w[:, None]).T @ x
        step = np.linalg.solve(info, x.T @ (y - mu))
        frac = 1.0
        while True:
            trial = coef + frac * step
            eta_trial = x @ trial
            ll = _loglik(eta_trial, y)
            if ll >= history[-1] or frac < 1e-10:
                break
            frac *= 0.5
        if ll < history[-1]:
            break  # no ascent left above rounding error
        delta = np.max(np.abs(trial - coef))
        coef, eta = trial, eta_trial
        history.append(ll)
        if np.max(np.abs(coef)) > guard:
            raise DivergenceError(
                f"coefficient magnitude exceeded {guard} after {it} iterations; "
                "the data are likely separable")
        if delta < tol:
            break
    else:
        raise DivergenceError(f"IRLS did not converge in {max_iter} iterations")
    mu = special.expit(eta)
    info = (x * (mu * (1.0 - mu))[:, None]).T @ x
    cov = np.linalg.inv(info)
    return LogisticResult(coef, cov, history, it, len(y))


# ---------------------------------------------------------------------------
# models
# ---------------------------------------------------------------------------

@dataclass
class ModelSimple:
    alpha0: float
    alpha1: float
    se: tuple
    n_obs: int
    caveat: str = POOLED_CAVEAT

    def tied_probability(self) -> float:
        return float(special.expit(self.alpha0))

    def prob_matrix(self, times, score_diff) -> np.ndarray:
        return special.expit(self.alpha0 + self.alpha1 * np.asarray(score_diff, dtype=float))

    def to_dict(self) -> dict:
        return {"kind": "simple", "alpha0": self.alpha0, "alpha1": self.alpha1,
                "se": list(self.se), "n_obs": self.n_obs, "caveat": self.caveat}


@dataclass
class ModelWeighted:
    degree: int
    basis: PolyBasis
    beta: np.ndarray  # baseline coefficients
    gamma: np.ndarray  # weight-curve coefficients
    se: np.ndarray
    n_obs: int
    time_range: tuple
    baseline_poly: bool = True
    caveat: str = POOLED_CAVEAT

    def baseline(self, t) -> np.ndarray:
        b = self.basis(t)
        return b[:, :len(self.beta)] @ self.beta

    def weight_curve(self, t) -> np.ndarray:
        return self.basis(t) @ self.gamma

    def prob_matrix(self, times, score_diff) -> np.ndarray:
        times = np.asarray(times, dtype=float)
        x = np.asarray(score_diff, dtype=float)
        lo, hi = self.time_range
        if np.any(times < lo) or np.any(times > hi):
            warnings.warn(f"game times outside the training range [{lo}, {hi}]; "
                          "the polynomials are extrapolated", RuntimeWarning, stacklevel=3)
        eta = self.baseline(times) + self.weight_curve(times) * x
        return special.expit(eta)

    def to_dict(self) -> dict:
        return {"kind": "weighted", "degree": self.degree, "basis": self.basis.to_dict(),
                "beta": self.beta.tolist(), "gamma": self.gamma.tolist(),
                "se": self.se.tolist(), "n_obs": self.n_obs,
                "time_range": list(self.time_range), "baseline_poly": self.baseline_poly,
                "caveat": self.caveat}


def model_from_dict(d: dict):
    if d["kind"] == "simple":
        return ModelSimple(d["alpha0"], d["alpha1"], tuple(d["se"]), d["n_obs"], d["caveat"])
    if d["kind"] == "weighted":
        return ModelWeighted(d["degree"], PolyBasis.from_dict(d["basis"]),
                             np.asarray(d["beta"], dtype=float),
                             np.asarray(d["gamma"], dtype=float),
                             np.asarray(d["se"], dtype=float), d["n_obs"],
                             tuple(d["time_range"]), d["baseline_poly"], d["caveat"])
    raise DomainError(f"unknown model kind {d['kind']!r}")


def _pool(games):
    games = list(games)
    if not games:
        raise DomainError("need at least one game")
    t = np.concatenate([g.times for g in games])
    x = np.concatenate([g.score_diff for g in games])
    y = np.concatenate([np.full(g.n_points, g.home_win, dtype=float) for g in games])
    return t, x, y


def fit_simple(games) -> ModelSimple:
    """Pooled logistic regression of the home-win label on the score difference."""
    _, x, y = _pool(games)
    res = logistic_fit(np.column_stack([np.ones_like(x), x]), y)
    return ModelSimple(float(res.coef[0]), float(res.coef[1]), tuple(res.se), res.n_obs)


def fit_weighted(games, degree: int = 7, orthogonal: bool = True,
                 baseline_poly: bool = True) -> ModelWeighted:
    """Logistic model with score difference interacted with a time polynomial.

    Columns are the basis polynomials ``P_0..P_l`` of game time (``P_0`` is
    the constant; only ``P_0`` when ``baseline_poly`` is false) followed by
    ``X * P_k`` for ``k = 0..l``.  ``degree=0`` reproduces the simple model.
    """
    games = list(games)
    if degree < 0:
        raise DomainError(f"degree must be >= 0, got {degree}")
    t, x, y = _pool(games)
    grid = np.unique(t)
    basis = PolyBasis.fit(grid, degree, orthogonal=orthogonal)
    b = basis(t)
    base = b if baseline_poly else b[:, :1]
    design = np.column_stack([base, b * x[:, None]])
    try:
        res = logistic_fit(design, y)
    except SingularDesignError as exc:
        raise SingularDesignError(f"degree {degree}: {exc}", column=exc.column) from exc
    k = base.shape[1]
    return ModelWeighted(degree=degree, basis=basis, beta=res.coef[:k], gamma=res.coef[k:],
                         se=res.se, n_obs=res.n_obs,
                         time_range=(float(grid.min()), float(grid.max())),
                         baseline_poly=baseline_poly)


def weight_curve(model: ModelWeighted, t) -> np.ndarray:
    """Fitted score-difference weight ``w(t)``."""
    scalar = np.ndim(t) == 0
    w = model.weight_curve(np.atleast_1d(t))
    return float(w[0]) if scalar else w


def predict(model, game: GamePath) -> ProbPath:
    """Prediction path ``0.5, p_0, ..., p_n, Y`` for one game."""
    p = model.prob_matrix(game.times, game.score_diff)
    return ProbPath(np.concatenate([[PRIOR], p, [float(game.home_win)]]))


@dataclass
class FilteredModel:
    """A base model whose in-game predictions pass through a martingale filter."""

    base: object
    filter: FilterModel
    clip: bool = False

    def prob_matrix(self, times, score_diff) -> np.ndarray:
        return apply_filter(self.filter, self.base.prob_matrix(times, score_diff), clip=self.clip)


def fit_filtered(base, games, tol: float = 1e-8, clip: bool = False) -> FilteredModel:
    """Fit a martingale filter to ``base`` model predictions on training games."""
    preds = game_prob_matrix(base, games)
    return FilteredModel(base, fit_filter(preds, tol), clip)


def game_prob_matrix(model, games) -> np.ndarray:
    """``n_games x n_points`` in-game predictions (no prior, no terminal)."""
    games = list(games)
    lengths = {g.n_points for g in games}
    if len(lengths) != 1:
        raise DomainError(f"games have differing grid lengths {sorted(lengths)}")
    times = games[0].times
    for g in games:
        if not np.array_equal(g.times, times):
            raise DomainError(f"game {g.game_id}: time grid differs from game {games[0].game_id}")
    x = np.vstack([g.score_diff for g in games])
    if isinstance(model, FilteredModel):
        return model.prob_matrix(times, x)
    return np.vstack([model.prob_matrix(times, row) for row in x])


def path_volatility(preds: np.ndarray, outcomes: np.ndarray) -> np.ndarray:
    """Total squared variation from the 0.5 prior through the 0/1 outcome, per row."""
    preds = np.atleast_2d(preds)
    full = np.column_stack([np.full(len(preds), PRIOR), preds, outcomes])
    return np.sum(np.diff(full, axis=1) ** 2, axis=1)


@dataclass
class EvaluationTable:
    names: list
    game_ids: list
    mse: np.ndarray  # n_games x n_models
    volatility: np.ndarray
    comparisons: list = field(default_factory=list)

    def summary(self) -> list:
        n = self.mse.shape[0]
        out = []
        for k, name in enumerate(self.names):
            vol = self.volatility[:, k]
            se_v = vol.std(ddof=1) / np.sqrt(n) if n > 1 else float("nan")
            out.append({
                "predictor": name, "count": n,
                "mse": float(self.mse[:, k].mean()),
                "mse_se": float(self.mse[:, k].std(ddof=1) / np.sqrt(n)) if n > 1 else float("nan"),
                "volatility": float(vol.mean()), "volatility_se": float(se_v),
                "volatility_ci95": [float(vol.mean() - 1.96 * se_v), float(vol.mean() + 1.96 * se_v)],
            })
        return out

    def paired(self, a: str, b: str) -> dict:
        """Paired comparison of predictor ``a`` minus predictor ``b`` across games."""
        i, j = self.names.index(a), self.names.index(b)
        n = self.mse.shape[0]
        out = {"a": a, "b": b}
        for key, mat in (("mse", self.mse), ("volatility", self.volatility)):
            diff = mat[:, i] - mat[:, j]
            se = diff.std(ddof=1) / np.sqrt(n) if n > 1 else float("nan")
            out[f"{key}_diff"] = float(diff.mean())
            out[f"{key}_se"] = float(se)
            out[f"{key}_z"] = float(diff.mean() / se) if se > 0 else float("nan")
        return out


def evaluate(models: dict, games) -> EvaluationTable:
    """Per-game MSE over every grid cell and total volatility for each model.

    MSE averages ``(Y - p_i)**2`` over the ``n_points`` in-game predictions;
    volatility sums squared changes along ``0.5, p_0, ..., p_n, Y``.
    """
    games = list(games)
    if not games:
        raise DomainError("need at least one game")
    y = np.array([g.home_win for g in games], dtype=float)
    names = list(models)
    mse = np.empty((len(games), len(names)))
    vol = np.empty_like(mse)
    for k, name in enumerate(names):
        p = game_prob_matrix(models[name], games)
        mse[:, k] = np.mean((y[:, None] - p) ** 2, axis=1)
        vol[:, k] = path_volatility(p, y)
    table = EvaluationTable(names, [g.game_id for g in games], mse, vol)
    table.comparisons = [table.paired(a, b) for a, b in zip(names[1:], names[:-1])]
    return table
