"""Orthonormal polynomial bases with a stored, reusable transform."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, SingularDesignError


@dataclass(frozen=True)
class PolyBasis:
    """Polynomials orthonormal (unit mean square) over a set of fitting points.

    ``basis(x)[:, k]`` is a degree-``k`` polynomial; column 0 is constant.
    With ``orthogonal=False`` the columns are raw powers of ``x`` instead.
    """

    degree: int
    center: float
    scale: float
    transform: np.ndarray  # maps scaled Vandermonde columns to the basis
    orthogonal: bool = True

    @classmethod
    def fit(cls, x, degree: int, orthogonal: bool = True) -> "PolyBasis":
        x = np.unique(np.asarray(x, dtype=float))
        if degree < 0:
            raise DomainError(f"degree must be >= 0, got {degree}")
        if not orthogonal:
            return cls(degree, 0.0, 1.0, np.eye(degree + 1), orthogonal=False)
        if len(x) <= degree:
            raise SingularDesignError(
                f"{len(x)} distinct points cannot support a degree-{degree} basis",
                column=len(x))
        center = 0.5 * (x.max() + x.min())
        scale = 0.5 * (x.max() - x.min()) or 1.0
        v = np.vander((x - center) / scale, degree + 1, increasing=True)
        q, r = np.linalg.qr(v)
        d = np.abs(np.diag(r))
        bad = np.flatnonzero(d < 1e-12 * max(d.max(), 1.0))
        if bad.size:
            raise SingularDesignError(f"polynomial basis degenerate at degree {bad[0]}",
                                      column=int(bad[0]))
        # sign convention: positive diagonal, so each polynomial has positive leading term
        r = r * np.sign(np.diag(r))[:, None]
        transform = np.linalg.solve(r, np.eye(degree + 1)) * np.sqrt(len(x))
        return cls(degree, float(center), float(scale), transform)

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        v = np.vander(np.ravel((x - self.center) / self.scale), self.degree + 1, increasing=True)
        return v @ self.transform

    def to_dict(self) -> dict:
        return {"degree": self.degree, "center": self.center, "scale": self.scale,
                "orthogonal": self.orthogonal, "transform": self.transform.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "PolyBasis":
        return cls(int(d["degree"]), float(d["center"]), float(d["scale"]),
                   np.asarray(d["transform"], dtype=float), bool(d["orthogonal"]))
