"""Martingale filter for families of prediction paths.

Given ``n`` realisations of a prediction path ``Yhat_1..Yhat_T`` (rows of an
``n x T`` matrix), the filter orthonormalises the columns in time order under
the sample inner product ``<u, v> = mean(u * v)``, starting from the constant
direction.  This writes each prediction as ``Yhat_t = sum_{s<=t} r_ts Q_s``.
Replacing every loading in column ``s`` of the triangular array by the column
mean ``rbar_s`` and accumulating gives the filtered path
``Ytilde_t = sum_{s<=t} rbar_s Q_s``, whose in-sample total squared error
never exceeds that of the input.

Index conventions: direction ``s = 0`` is the constant; direction ``s >= 1``
is the innovation of prediction column ``s`` (1-based time).  ``R`` is stored
as a ``T x (T + 1)`` array with ``R[t - 1, s] = r_ts`` for ``s <= t``.
"""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, IllConditionedWarning


@dataclass(frozen=True)
class PredictionMatrix:
    preds: np.ndarray  # n x T
    outcomes: np.ndarray | None = None

    def __post_init__(self):
        p = np.asarray(self.preds, dtype=float)
        if p.ndim != 2:
            raise DomainError("predictions must form an n x T matrix")
        if not np.all(np.isfinite(p)):
            raise DomainError("predictions must be finite")
        object.__setattr__(self, "preds", p)
        if self.outcomes is not None:
            y = np.asarray(self.outcomes, dtype=float).ravel()
            if len(y) != p.shape[0]:
                raise DomainError(f"{len(y)} outcomes for {p.shape[0]} prediction rows")
            object.__setattr__(self, "outcomes", y)


@dataclass(frozen=True)
class FilterModel:
    R: np.ndarray  # T x (T + 1), lower triangular in (t, s)
    col_means: np.ndarray  # rbar_0..rbar_T
    retained: np.ndarray  # bool mask over directions 0..T
    col_norms: np.ndarray  # RMS of each prediction column in the fitting sample
    tol: float
    n_fit: int

    @property
    def T(self) -> int:
        return self.R.shape[0]

    @property
    def Rbar(self) -> np.ndarray:
        """The triangular array with each column replaced by its mean."""
        return np.tril(np.broadcast_to(self.col_means, self.R.shape), k=1)

    def to_dict(self) -> dict:
        packed = [float(v) for t in range(self.T) for v in self.R[t, :t + 2]]
        return {"T": self.T, "n_fit": self.n_fit, "tol": self.tol, "R_packed": packed,
                "col_means": self.col_means.tolist(), "retained": self.retained.tolist(),
                "col_norms": self.col_norms.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "FilterModel":
        T = int(d["T"])
        packed = np.asarray(d["R_packed"], dtype=float)
        if len(packed) != T * (T + 3) // 2:
            raise DomainError("packed loading array has the wrong length")
        R = np.zeros((T, T + 1))
        pos = 0
        for t in range(T):
            R[t, :t + 2] = packed[pos:pos + t + 2]
            pos += t + 2
        return cls(R, np.asarray(d["col_means"], dtype=float),
                   np.asarray(d["retained"], dtype=bool),
                   np.asarray(d["col_norms"], dtype=float), float(d["tol"]), int(d["n_fit"]))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "FilterModel":
        return cls.from_dict(json.loads(text))


def _as_matrix(m) -> np.ndarray:
    return m.preds if isinstance(m, PredictionMatrix) else PredictionMatrix(m).preds


def orthogonalize(preds: np.ndarray, tol: float = 1e-8):
    """Sample Gram-Schmidt of the prediction columns behind a constant direction.

    Classical Gram-Schmidt with one reorthogonalisation pass.  Returns
    ``(Q, R, retained, col_norms)`` with ``Q`` of shape ``n x (T + 1)``.
    """
    y = np.asarray(preds, dtype=float)
    n, T = y.shape
    Q = np.zeros((n, T + 1))
    Q[:, 0] = 1.0
    R = np.zeros((T, T + 1))
    retained = np.zeros(T + 1, dtype=bool)
    retained[0] = True
    col_norms = np.sqrt(np.mean(y ** 2, axis=0))
    for t in range(T):
        v = y[:, t].copy()
        basis = Q[:, :t + 1]
        for _ in range(2):
            c = basis.T @ v / n
            v -= basis @ c
            R[t, :t + 1] += c
        resid = np.sqrt(np.mean(v ** 2))
        if col_norms[t] > 0 and resid > tol * col_norms[t]:
            Q[:, t + 1] = v / resid
            R[t, t + 1] = resid
            retained[t + 1] = True
    # loadings on dropped directions are exactly zero
    R[:, ~retained] = 0.0
    return Q, R, retained, col_norms


def fit_filter(m, tol: float = 1e-8) -> FilterModel:
    """Decompose a prediction matrix and average the loadings by column.

    ``rbar_s`` is the mean of ``r_ts`` over ``t = s..T`` (``T - s + 1``
    entries; ``s = 0`` averages over ``t = 1..T``).  Dropped directions,
    whose residual RMS falls below ``tol`` times the column RMS, have zero
    loadings and ``rbar_s = 0``.
    """
    y = _as_matrix(m)
    n, T = y.shape
    if n < 2:
        raise DomainError(f"need at least 2 prediction rows, got {n}")
    if not tol > 0:
        raise DomainError(f"tol must be positive, got {tol}")
    if not np.any(y):
        raise DomainError("prediction matrix is identically zero")
    _, R, retained, col_norms = orthogonalize(y, tol)
    counts = np.concatenate([[T], T - np.arange(T)])  # rows t >= max(s, 1)
    means = R.sum(axis=0) / counts
    means[~retained] = 0.0
    return FilterModel(R=R, col_means=means, retained=retained, col_norms=col_norms,
                       tol=tol, n_fit=n)


def recover_innovations(model: FilterModel, paths, warn_tol: float = 1e-6) -> np.ndarray:
    """Back-substitute prediction paths into basis coordinates ``q_0..q_T``.

    Emits :class:`IllConditionedWarning` when a dropped direction would have
    to absorb a residual larger than ``warn_tol`` times that column's RMS.
    """
    y = np.atleast_2d(np.asarray(paths, dtype=float))
    if y.shape[1] != model.T:
        raise DomainError(f"path length {y.shape[1]} does not match filter length {model.T}")
    n = y.shape[0]
    q = np.zeros((n, model.T + 1))
    q[:, 0] = 1.0
    flagged = 0
    for t in range(model.T):
        resid = y[:, t] - q[:, :t + 1] @ model.R[t, :t + 1]
        if model.retained[t + 1]:
            q[:, t + 1] = resid / model.R[t, t + 1]
        else:
            flagged += int(np.sum(np.abs(resid) > warn_tol * max(model.col_norms[t], 1e-300)))
    if flagged:
        warnings.warn(f"{flagged} path entries carry signal along dropped directions; "
                      "it is discarded by the filter", IllConditionedWarning, stacklevel=3)
    return q


def apply_filter(model: FilterModel, paths, clip: bool = False) -> np.ndarray:
    """Filtered predictions ``Ytilde_t = sum_{s<=t} rbar_s q_s``.

    Accepts one path (length ``T``) or a matrix of paths.  Output is not
    confined to [0, 1] unless ``clip`` is set.
    """
    single = np.ndim(paths) == 1
    q = recover_innovations(model, paths)
    out = np.cumsum(q * model.col_means, axis=1)[:, 1:]
    if clip:
        out = np.clip(out, 0.0, 1.0)
    return out[0] if single else out


@dataclass(frozen=True)
class RiskDecomposition:
    risk_orig: float
    risk_filtered: float
    spread_term: float
    cross_term: float
    cross_outcome_term: float  # mean of y 1'(Ytilde - Yhat)
    cross_trace_term: float  # mean of Ytilde'(Ytilde - Yhat)

    @property
    def identity_residual(self) -> float:
        return self.risk_orig - self.risk_filtered - self.spread_term - 2.0 * self.cross_term


def risk_decomposition(model: FilterModel, m, outcomes=None) -> RiskDecomposition:
    """Split the in-sample risk of the input predictions.

    ``risk_orig = risk_filtered + spread + 2 * cross`` where ``spread`` is the
    sum of squared deviations of the loadings from their column means and
    ``cross = mean((y 1 - Ytilde)'(Ytilde - Yhat))``.  Risks are totals over
    time averaged over rows.
    """
    if isinstance(m, PredictionMatrix):
        yhat, y = m.preds, m.outcomes if outcomes is None else outcomes
    else:
        yhat, y = _as_matrix(m), outcomes
    if y is None:
        raise DomainError("outcomes are required for a risk decomposition")
    y = np.asarray(y, dtype=float).ravel()
    if yhat.shape[1] != model.T or len(y) != yhat.shape[0]:
        raise DomainError("prediction matrix does not match the fitted filter")
    ytil = apply_filter(model, yhat)
    gap = ytil - yhat
    spread = float(np.sum((model.Rbar - model.R)[:, model.retained] ** 2))
    cross_y = float(np.mean(y * gap.sum(axis=1)))
    cross_tr = float(np.mean(np.sum(ytil * gap, axis=1)))
    return RiskDecomposition(
        risk_orig=float(np.mean(np.sum((y[:, None] - yhat) ** 2, axis=1))),
        risk_filtered=float(np.mean(np.sum((y[:, None] - ytil) ** 2, axis=1))),
        spread_term=spread, cross_term=cross_y - cross_tr,
        cross_outcome_term=cross_y, cross_trace_term=cross_tr)
