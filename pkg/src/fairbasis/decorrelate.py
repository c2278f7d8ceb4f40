"""Change of basis that leaves sensitive columns untouched and makes every
other column uncorrelated with them.

Non-sensitive column ``k`` is replaced by ``x_k - S @ beta_k`` where
``beta_k`` solves the normal equations ``cov(S, S) beta_k = cov(S, x_k)`` on
centred data. This is the residual of a least-squares regression on the
sensitive block, and it is the closest column to ``x_k`` (in variance) among
those with zero covariance to every sensitive column.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DomainError, RankDeficient, SchemaError, ShapeError

log = logging.getLogger(__name__)

PINV_RCOND = 1e-10


@dataclass(frozen=True)
class TransitionMatrix:
    """Square matrix ``A`` with ``x' = A x`` applied row-wise to data."""

    dim: int
    sensitive_indices: tuple
    rows: np.ndarray
    column_means: np.ndarray
    names: tuple = ()
    passthrough: tuple = ()

    def __post_init__(self):
        rows = np.array(self.rows, dtype=float)
        if rows.shape != (self.dim, self.dim):
            raise ShapeError(f"transition rows must be {self.dim}x{self.dim}, got {rows.shape}")
        rows.setflags(write=False)
        means = np.array(self.column_means, dtype=float)
        means.setflags(write=False)
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "column_means", means)
        object.__setattr__(self, "sensitive_indices", tuple(int(i) for i in self.sensitive_indices))
        object.__setattr__(self, "names", tuple(self.names))
        object.__setattr__(self, "passthrough", tuple(self.passthrough))

    @property
    def sensitive_count(self) -> int:
        return len(self.sensitive_indices)

    @property
    def feature_indices(self) -> list:
        sens = set(self.sensitive_indices)
        return [k for k in range(self.dim) if k not in sens]

    def coefficients(self) -> np.ndarray:
        """Block of ``A`` on (non-sensitive rows, sensitive columns)."""
        return self.rows[np.ix_(self.feature_indices, list(self.sensitive_indices))]

    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "sensitive_indices": list(self.sensitive_indices),
            "names": list(self.names),
            "rows": self.rows.tolist(),
            "column_means": self.column_means.tolist(),
            "passthrough": list(self.passthrough),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TransitionMatrix":
        try:
            return cls(
                dim=int(d["dim"]),
                sensitive_indices=tuple(d["sensitive_indices"]),
                rows=np.asarray(d["rows"], dtype=float),
                column_means=np.asarray(d["column_means"], dtype=float),
                names=tuple(d.get("names", ())),
                passthrough=tuple(d.get("passthrough", ())),
            )
        except KeyError as exc:
            raise SchemaError(f"transition JSON is missing {exc}") from None

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "TransitionMatrix":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def _check_indices(sensitive_indices, dim) -> tuple:
    idx = tuple(int(i) for i in sensitive_indices)
    if len(set(idx)) != len(idx):
        raise SchemaError("duplicate sensitive indices")
    if any(i < 0 or i >= dim for i in idx):
        raise SchemaError(f"sensitive indices {idx} out of range for {dim} columns")
    if not idx:
        raise SchemaError("at least one sensitive column is required")
    if len(idx) >= dim:
        raise SchemaError("at least one non-sensitive column is required")
    return idx


def _pinv_symmetric(C: np.ndarray, strict: bool) -> np.ndarray:
    w, V = np.linalg.eigh(C)
    top = max(float(np.max(np.abs(w))), 0.0)
    if top == 0.0:
        raise RankDeficient("sensitive block has zero variance")
    keep = w > PINV_RCOND * top
    if not np.all(keep):
        msg = f"sensitive columns are collinear: {int(np.sum(~keep))} direction(s) dropped"
        if strict:
            raise RankDeficient(msg)
        log.warning(msg)
    return (V[:, keep] / w[keep]) @ V[:, keep].T


def fit_transition(data, sensitive_indices: Sequence[int], names: Sequence[str] = (),
                   strict: bool = False) -> TransitionMatrix:
    """Fit ``A`` on ``data`` (rows are observations).

    Collinear sensitive columns are handled with a pseudo-inverse that drops
    eigen-directions below ``1e-10`` times the largest; ``strict=True``
    raises :class:`RankDeficient` instead. A non-sensitive column with zero
    variance is left unchanged.
    """
    X = np.asarray(data, dtype=float)
    if X.ndim != 2:
        raise ShapeError("data must be a 2-d matrix")
    n, dim = X.shape
    sens = _check_indices(sensitive_indices, dim)
    if n < len(sens) + 2:
        raise ShapeError(f"need at least {len(sens) + 2} rows to fit, got {n}")
    if not np.all(np.isfinite(X)):
        raise DomainError("data contains non-finite values")

    means = X.mean(axis=0)
    Xc = X - means
    S = Xc[:, list(sens)]
    Css = S.T @ S / (n - 1)
    Css_inv = _pinv_symmetric(Css, strict)

    A = np.eye(dim)
    passthrough = []
    for k in range(dim):
        if k in sens:
            continue
        xk = Xc[:, k]
        if not np.any(xk != 0.0):
            label = names[k] if names else str(k)
            log.warning("column %s has zero variance and is passed through", label)
            passthrough.append(k)
            continue
        beta = Css_inv @ (S.T @ xk / (n - 1))
        A[k, list(sens)] = -beta
    return TransitionMatrix(dim, sens, A, means, tuple(names), tuple(passthrough))


def apply_transition(A: TransitionMatrix, data) -> np.ndarray:
    X = np.asarray(data, dtype=float)
    if X.ndim != 2 or X.shape[1] != A.dim:
        raise ShapeError(f"data has shape {X.shape}, expected {A.dim} columns")
    out = X.copy()
    feats = A.feature_indices
    out[:, feats] = X @ A.rows[feats].T
    return out


def gram_schmidt(vectors, tol: float = 1e-10) -> np.ndarray:
    """Orthogonalize columns under the covariance inner product.

    The first column is returned as is; each later column has its projections
    on the earlier outputs removed. A column whose residual variance falls
    below ``tol`` times its own variance raises :class:`RankDeficient`.
    """
    U = np.asarray(vectors, dtype=float)
    if U.ndim != 2:
        raise ShapeError("vectors must be a 2-d matrix with one vector per column")
    centred = U - U.mean(axis=0)
    V = np.empty_like(U)
    Vc = np.empty_like(centred)
    for k in range(U.shape[1]):
        v = U[:, k].copy()
        vc = centred[:, k].copy()
        own = float(vc @ vc)
        for j in range(k):
            coef = float(vc @ Vc[:, j]) / float(Vc[:, j] @ Vc[:, j])
            v -= coef * V[:, j]
            vc -= coef * Vc[:, j]
        if own == 0.0 or float(vc @ vc) <= tol * own:
            raise RankDeficient(f"vector {k} is linearly dependent on the previous ones")
        V[:, k] = v
        Vc[:, k] = vc
    return V
