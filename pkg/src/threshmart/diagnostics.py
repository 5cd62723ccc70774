"""Ensemble diagnostics for threshold martingales.

Three checks: calibration (lagged scatterplots and regressions with HC0
sandwich standard errors), total volatility against ``pi (1 - pi)``, and
prequential explained variation of the martingale differences.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .errors import (DomainError, IncompletePathError, SingularDesignError,
                     UndefinedStatisticError)
from .polybasis import PolyBasis
from .threshold_martingale import _probs, prob_matrix, quadratic_variation

RANK_TOL = 1e-10


# ---------------------------------------------------------------------------
# least squares
# ---------------------------------------------------------------------------

@dataclass
class OlsResult:
    coef: np.ndarray
    cov: np.ndarray
    resid: np.ndarray
    fitted: np.ndarray
    df_resid: int
    robust: bool

    @property
    def se(self) -> np.ndarray:
        return np.sqrt(np.diag(self.cov))

    @property
    def tvalues(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            return self.coef / self.se

    @property
    def rsquared(self) -> float:
        y = self.fitted + self.resid
        tss = np.sum((y - y.mean()) ** 2)
        if tss == 0:
            return float("nan")
        return 1.0 - np.sum(self.resid ** 2) / tss


def check_rank(design: np.ndarray, tol: float = RANK_TOL) -> None:
    """Raise :class:`SingularDesignError` naming the first dependent column."""
    x = np.asarray(design, dtype=float)
    norms = np.linalg.norm(x, axis=0)
    if x.shape[1] == 0:
        return
    zero = np.flatnonzero(norms == 0)
    if zero.size:
        raise SingularDesignError(f"design column {zero[0]} is identically zero",
                                  column=int(zero[0]))
    r = np.linalg.qr(x / norms, mode="r")
    d = np.abs(np.diag(r))
    bad = np.flatnonzero(d < tol)
    if bad.size:
        raise SingularDesignError(
            f"design column {bad[0]} is collinear with preceding columns",
            column=int(bad[0]))


def ols_fit(design, response, robust: bool = False) -> OlsResult:
    """Least squares with classical or HC0 sandwich covariance.

    The classical covariance is ``s**2 (X'X)^-1`` with ``s**2 = RSS/(n - p)``;
    the sandwich is ``(X'X)^-1 X' diag(e**2) X (X'X)^-1``.
    """
    x = np.asarray(design, dtype=float)
    y = np.asarray(response, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    n, k = x.shape
    if len(y) != n:
        raise DomainError(f"design has {n} rows but response has {len(y)}")
    if n < k:
        raise DomainError(f"need at least as many rows ({n}) as columns ({k})")
    check_rank(x)
    q, r = np.linalg.qr(x)
    coef = np.linalg.solve(r, q.T @ y)
    fitted = x @ coef
    resid = y - fitted
    r_inv = np.linalg.solve(r, np.eye(k))
    bread = r_inv @ r_inv.T  # (X'X)^-1
    if robust:
        meat = (x * resid[:, None] ** 2).T @ x
        cov = bread @ meat @ bread
    else:
        df = n - k
        s2 = resid @ resid / df if df > 0 else float("nan")
        cov = s2 * bread
    return OlsResult(coef, cov, resid, fitted, n - k, robust)


def wald_test(coef, cov, null=None):
    """Joint Wald statistic, degrees of freedom and chi-square p-value."""
    coef = np.asarray(coef, dtype=float)
    delta = coef - (0.0 if null is None else np.asarray(null, dtype=float))
    stat = float(delta @ np.linalg.solve(cov, delta))
    return stat, len(coef), float(stats.chi2.sf(stat, len(coef)))


# ---------------------------------------------------------------------------
# calibration
# ---------------------------------------------------------------------------

@dataclass
class CalibrationReport:
    t: int
    lags: tuple
    difference_lag: int | None
    names: list
    coef: np.ndarray
    robust_se: np.ndarray
    wald: float
    df: int
    p_value: float
    n: int
    degree: int = 1

    @property
    def intercept(self) -> float:
        return float(self.coef[0])

    @property
    def slope(self) -> float:
        return float(self.coef[1])

    @property
    def null(self) -> np.ndarray:
        # martingale null: zero for difference regressions, unit lead slope for levels
        null = np.zeros(len(self.coef))
        if self.difference_lag is None and self.degree == 1:
            null[1] = 1.0
        return null

    @property
    def robust_t(self) -> np.ndarray:
        """t-statistics against the martingale null value of each coefficient."""
        return (self.coef - self.null) / self.robust_se

    def rejects(self, alpha: float = 0.05) -> bool:
        return self.p_value < alpha

    def to_dict(self) -> dict:
        return {"t": self.t, "lags": list(self.lags), "difference_lag": self.difference_lag,
                "degree": self.degree, "n": self.n,
                "terms": {nm: {"coef": float(c), "robust_se": float(s), "robust_t": float(tv)}
                          for nm, c, s, tv in zip(self.names, self.coef, self.robust_se,
                                                  self.robust_t)},
                "wald": self.wald, "df": self.df, "p_value": self.p_value}


def calibration_regression(paths, t: int, lags, difference_lag: int | None = 1) -> CalibrationReport:
    """Regress ``p_t - p_{t-s}`` (or ``p_t`` itself) on earlier probabilities.

    ``lags`` are ``s_1 < ... < s_k``; regressors are ``p_{t - s_j}`` plus an
    intercept.  With ``difference_lag=s`` (require ``s < s_1``) the martingale
    null is that every coefficient is zero.  With ``difference_lag=None`` the
    response is the level ``p_t`` and the null is intercept 0, slope 1 on
    ``p_{t - s_1}`` and 0 elsewhere.  Inference uses HC0 sandwich covariance.
    """
    p = prob_matrix(paths)
    lags = tuple(int(s) for s in lags)
    if not lags or any(b <= a for a, b in zip(lags, lags[1:])) or lags[0] < 1:
        raise DomainError(f"lags must be strictly increasing positive integers, got {lags}")
    if not 0 <= t - lags[-1] or t >= p.shape[1]:
        raise DomainError(f"lags {lags} do not fit inside 0..{p.shape[1] - 1} at t={t}")
    if difference_lag is not None and not 1 <= difference_lag < lags[0]:
        raise DomainError("difference lag must satisfy 1 <= s < s_1")
    n = p.shape[0]
    if n < len(lags) + 2:
        raise DomainError(f"need at least {len(lags) + 2} series, got {n}")
    y = p[:, t] if difference_lag is None else p[:, t] - p[:, t - difference_lag]
    x = np.column_stack([np.ones(n)] + [p[:, t - s] for s in lags])
    fit = ols_fit(x, y, robust=True)
    report = CalibrationReport(t=t, lags=lags, difference_lag=difference_lag,
                               names=["intercept"] + [f"p[t-{s}]" for s in lags],
                               coef=fit.coef, robust_se=fit.se, wald=0.0, df=0,
                               p_value=1.0, n=n)
    report.wald, report.df, report.p_value = wald_test(fit.coef, fit.cov, report.null)
    return report


def polynomial_calibration(paths, s: int, t: int, degree: int = 5) -> CalibrationReport:
    """Fit ``p_t`` on orthonormal polynomials of ``p_s`` with sandwich t-statistics.

    The basis is orthonormalised over the observed ``p_s`` values.  Under
    calibration only the constant and linear terms carry signal; the reported
    null and ``robust_t`` are against zero for every term.
    """
    p = prob_matrix(paths)
    if not 0 <= s < t < p.shape[1]:
        raise DomainError(f"need 0 <= s < t <= T, got s={s}, t={t}")
    basis = PolyBasis.fit(p[:, s], degree)
    x = basis(p[:, s])
    fit = ols_fit(x, p[:, t], robust=True)
    report = CalibrationReport(t=t, lags=(t - s,), difference_lag=None,
                               names=[f"poly{k}" for k in range(degree + 1)],
                               coef=fit.coef, robust_se=fit.se, wald=0.0, df=0,
                               p_value=1.0, n=p.shape[0], degree=degree)
    # joint test of the nonlinear terms only
    if degree >= 2:
        report.wald, report.df, report.p_value = wald_test(fit.coef[2:], fit.cov[2:, 2:])
    return report


@dataclass
class ScatterData:
    s: int
    t: int
    x: np.ndarray
    y: np.ndarray
    slope: float | None
    intercept: float | None
    degenerate: bool

    def rows(self):
        for xi, yi in zip(self.x, self.y):
            yield self.s, self.t, xi, yi


def calibration_scatter(paths, s: int, t: int) -> ScatterData:
    """Points ``(p_s, p_t)`` across series with a least-squares line.

    The line is omitted (``degenerate=True``) when there is a single series
    or when ``p_s`` does not vary, e.g. ``s = 0`` for model-generated paths.
    """
    p = prob_matrix(paths)
    if not 0 <= s < t < p.shape[1]:
        raise DomainError(f"need 0 <= s < t <= T, got s={s}, t={t}")
    x, y = p[:, s], p[:, t]
    if len(x) < 2:
        return ScatterData(s, t, x, y, None, None, True)
    try:
        fit = ols_fit(np.column_stack([np.ones_like(x), x]), y)
    except SingularDesignError:
        return ScatterData(s, t, x, y, None, None, True)
    return ScatterData(s, t, x, y, float(fit.coef[1]), float(fit.coef[0]), False)


# ---------------------------------------------------------------------------
# total volatility
# ---------------------------------------------------------------------------

@dataclass
class VolatilityTestReport:
    n: int
    target: float
    mean_total: float  # mean of (p_T - pi)^2
    se: float
    z: float
    mean_qv: float  # mean of S_T
    se_qv: float
    z_qv: float
    consistency_z: float
    z_crit: float = 3.0

    @property
    def passed(self) -> bool:
        return bool(abs(self.z) <= self.z_crit)

    @property
    def consistent(self) -> bool:
        """False when the two volatility statistics disagree by > 4 paired SEs."""
        return bool(not abs(self.consistency_z) > 4.0)

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in ("n", "target", "mean_total", "se", "z", "mean_qv",
                                           "se_qv", "z_qv", "consistency_z", "z_crit")}
        d.update(passed=self.passed, consistent=self.consistent)
        return d


def _z(diff, se):
    if se > 0:
        return diff / se
    return 0.0 if diff == 0 else float(np.copysign(np.inf, diff))


def total_volatility_test(paths, pi: float, z_crit: float = 3.0) -> VolatilityTestReport:
    """Compare total volatility with ``pi (1 - pi)`` across independent paths.

    Reports the mean of ``(p_T - pi)**2`` (the primary statistic) and the mean
    of the quadratic variation ``S_T``; the two agree in expectation when
    ``p_0 = pi``.
    """
    rows = [_probs(p) for p in paths]
    n = len(rows)
    if n < 2:
        raise DomainError(f"need at least 2 paths, got {n}")
    if not 0 < pi < 1:
        raise DomainError(f"pi must lie in (0, 1), got {pi}")
    bad = [j for j, r in enumerate(rows) if r[-1] not in (0.0, 1.0)]
    if bad:
        raise IncompletePathError(f"{len(bad)} paths lack a 0/1 terminal: {bad[:10]}", bad)
    target = pi * (1.0 - pi)
    dev = np.array([(r[-1] - pi) ** 2 for r in rows])
    qv = np.array([quadratic_variation(r)[-1] for r in rows])
    se = dev.std(ddof=1) / np.sqrt(n)
    se_qv = qv.std(ddof=1) / np.sqrt(n)
    gap = dev - qv
    se_gap = gap.std(ddof=1) / np.sqrt(n)
    return VolatilityTestReport(
        n=n, target=target, mean_total=float(dev.mean()), se=float(se),
        z=float(_z(dev.mean() - target, se)), mean_qv=float(qv.mean()), se_qv=float(se_qv),
        z_qv=float(_z(qv.mean() - target, se_qv)),
        consistency_z=float(_z(gap.mean(), se_gap)), z_crit=z_crit)


# ---------------------------------------------------------------------------
# prequential R^2
# ---------------------------------------------------------------------------

def default_burn_in(lag: int) -> int:
    return lag + max(10, 2 * lag + 2)


class RecursiveLeastSquares:
    """Recursive least squares on accumulated normal equations.

    Keeps ``A = ridge * I + sum x x'`` and ``b = sum x y`` and re-solves after
    each row, so coefficients match batch least squares up to the ridge.
    The small ridge keeps early, under-determined steps well posed.
    """

    def __init__(self, n_params: int, ridge: float = 1e-10):
        self.A = ridge * np.eye(n_params)
        self.b = np.zeros(n_params)
        self.coef = np.zeros(n_params)
        self.n_obs = 0

    def predict(self, x) -> float:
        return float(np.dot(x, self.coef))

    def update(self, x, y) -> None:
        x = np.asarray(x, dtype=float)
        self.A += np.outer(x, x)
        self.b += x * y
        self.coef = np.linalg.solve(self.A, self.b)
        self.n_obs += 1


def lagged_design(d, lag: int):
    """Rows ``[1, d_{t-1}, ..., d_{t-lag}]`` with responses ``d_t``, t = lag+1..T."""
    d = np.asarray(d, dtype=float)
    T = len(d)
    if T <= lag:
        raise DomainError(f"series of length {T} too short for lag {lag}")
    x = np.column_stack([np.ones(T - lag)] + [d[lag - k:T - k] for k in range(1, lag + 1)])
    return x, d[lag:]


def prequential_predictions(d, lag: int = 4, ridge: float = 1e-10) -> np.ndarray:
    """One-step predictions ``dhat_t`` for t = lag+1..T from fits on earlier rows.

    Differences are rescaled by their root mean square before fitting so the
    ridge acts at a fixed relative size; predictions are returned on the
    original scale.
    """
    d = np.asarray(d, dtype=float)
    scale = np.sqrt(np.mean(d ** 2))
    if scale == 0:
        scale = 1.0
    x, y = lagged_design(d / scale, lag)
    rls = RecursiveLeastSquares(lag + 1, ridge)
    out = np.empty(len(y))
    for i in range(len(y)):
        out[i] = rls.predict(x[i])
        rls.update(x[i], y[i])
    return out * scale


def prequential_r2(d, lag: int = 4, burn_in: int | None = None, ridge: float = 1e-10) -> float:
    """Prequential explained variation of ``d_t`` by its own lags.

    ``burn_in`` is the first time index ``t_0`` (1-based, ``d_1..d_T``) scored.
    Returns ``1 - sum (d_t - dhat_t)^2 / sum d_t^2`` over ``t >= t_0``.
    """
    d = np.asarray(d, dtype=float)
    T = len(d)
    if lag < 0:
        raise DomainError(f"lag must be >= 0, got {lag}")
    t0 = default_burn_in(lag) if burn_in is None else int(burn_in)
    if t0 < 2 * lag + 2:
        raise DomainError(f"burn-in t0={t0} leaves fewer rows than parameters (need >= {2 * lag + 2})")
    if T - t0 < 1:
        raise DomainError(f"series of length {T} too short for burn-in {t0}")
    pred = prequential_predictions(d, lag, ridge)
    # pred[i] belongs to time t = lag + 1 + i
    keep = slice(t0 - lag - 1, None)
    actual = d[lag:][keep]
    denom = np.sum(actual ** 2)
    if denom == 0:
        raise UndefinedStatisticError("all scored differences are zero")
    return float(1.0 - np.sum((actual - pred[keep]) ** 2) / denom)


def lagged_ols_r2(d, lag: int = 4) -> float:
    """Full-sample OLS R^2 of ``d_t`` on an intercept and ``lag`` lags."""
    x, y = lagged_design(d, lag)
    fit = ols_fit(x, y)
    return fit.rsquared


@dataclass
class PrequentialReport:
    lag: int
    burn_in: int
    prequential: np.ndarray
    ols: np.ndarray
    fraction_negative: float = field(init=False)

    def __post_init__(self):
        ok = np.isfinite(self.prequential)
        self.fraction_negative = float(np.mean(self.prequential[ok] < 0)) if ok.any() else float("nan")

    @property
    def median_prequential(self) -> float:
        return float(np.nanmedian(self.prequential))

    @property
    def median_ols(self) -> float:
        return float(np.nanmedian(self.ols))

    def rows(self):
        for j, (a, b) in enumerate(zip(self.prequential, self.ols)):
            yield j, "prequential_r2", a
            yield j, "ols_r2", b

    def to_dict(self) -> dict:
        return {"lag": self.lag, "burn_in": self.burn_in,
                "fraction_negative": self.fraction_negative,
                "median_prequential": self.median_prequential, "median_ols": self.median_ols,
                "n_series": len(self.prequential),
                "n_defined": int(np.isfinite(self.prequential).sum())}


def ols_vs_prequential_contrast(diffs, lag: int = 4, burn_in: int | None = None) -> PrequentialReport:
    """Per-series prequential and full-sample OLS R^2 side by side.

    Series whose statistic is undefined (all-zero differences, or a singular
    OLS design) get NaN and are excluded from ``fraction_negative``.
    """
    t0 = default_burn_in(lag) if burn_in is None else int(burn_in)
    preq, ols = [], []
    for d in diffs:
        try:
            preq.append(prequential_r2(d, lag, t0))
        except UndefinedStatisticError:
            preq.append(np.nan)
        try:
            ols.append(lagged_ols_r2(d, lag))
        except SingularDesignError:
            ols.append(np.nan)
    return PrequentialReport(lag, t0, np.array(preq), np.array(ols))
