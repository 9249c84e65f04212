"""Least-squares solvers (OLS and ridge) on a pivoted QR factorisation."""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
import scipy.linalg


class RankDeficientError(np.linalg.LinAlgError):
    def __init__(self, rank: int, ncols: int):
        super().__init__(f"design matrix is rank deficient: effective rank {rank} < {ncols} columns")
        self.rank = rank
        self.ncols = ncols


@dataclass(frozen=True)
class LinearModel:
    weights: np.ndarray
    intercept: float = 0.0
    column_names: tuple[str, ...] = ()

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float).ravel()
        if not np.all(np.isfinite(w)) or not np.isfinite(self.intercept):
            raise ValueError("linear model parameters must be finite")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "intercept", float(self.intercept))
        names = tuple(self.column_names) or tuple(f"x{i}" for i in range(w.size))
        if len(names) != w.size:
            raise ValueError("column_names length must match weights")
        object.__setattr__(self, "column_names", names)

    def to_dict(self) -> dict:
        return {"weights": self.weights.tolist(), "intercept": self.intercept,
                "columns": list(self.column_names)}

    @classmethod
    def from_dict(cls, d: dict) -> "LinearModel":
        return cls(np.asarray(d["weights"], dtype=float), float(d["intercept"]), tuple(d["columns"]))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, s: str) -> "LinearModel":
        return cls.from_dict(json.loads(s))


def _check(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2 or y.ndim != 1 or x.shape[0] != y.shape[0]:
        raise ValueError(f"dimension mismatch: x{x.shape} vs y{y.shape}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValueError("inputs contain NaN or infinite values")
    return x, y


def _lstsq_qr(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Full-rank least squares via Householder QR with column pivoting."""
    m, n = a.shape
    if n == 0:
        return np.zeros(0)
    if m < n:
        raise RankDeficientError(m, n)
    q, r, piv = scipy.linalg.qr(a, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    tol = max(m, n) * np.finfo(float).eps * diag[0] if diag.size else 0.0
    rank = int(np.sum(diag > tol))
    if rank < n or diag[0] == 0:
        raise RankDeficientError(rank, n)
    z = scipy.linalg.solve_triangular(r, q.T @ b)
    w = np.empty(n)
    w[piv] = z
    return w


def ols_fit(x, y, intercept: bool = False, column_names=()) -> LinearModel:
    """Ordinary least squares. Rank-deficient designs raise `RankDeficientError`."""
    x, y = _check(x, y)
    if intercept:
        a = np.hstack([x, np.ones((x.shape[0], 1))])
        sol = _lstsq_qr(a, y)
        return LinearModel(sol[:-1], sol[-1], column_names)
    return LinearModel(_lstsq_qr(x, y), 0.0, column_names)


def ridge_fit(x, y, lam: float, intercept: bool = False, column_names=()) -> LinearModel:
    """Least squares with an L2 penalty ``lam * ||w||^2`` on the weights (never the intercept).

    Solved as an augmented least-squares problem so that ``lam = 0`` reduces to `ols_fit`.
    """
    if not lam >= 0:
        raise ValueError("ridge penalty must be non-negative")
    x, y = _check(x, y)
    if lam == 0:
        return ols_fit(x, y, intercept, column_names)
    n, d = x.shape
    if intercept:
        xm = x.mean(axis=0)
        ym = y.mean()
        xc, yc = x - xm, y - ym
    else:
        xc, yc = x, y
    a = np.vstack([xc, np.sqrt(lam) * np.eye(d)])
    b = np.concatenate([yc, np.zeros(d)])
    w = _lstsq_qr(a, b)
    b0 = float(ym - xm @ w) if intercept else 0.0
    return LinearModel(w, b0, column_names)


def predict_linear(m: LinearModel, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2 or x.shape[1] != m.weights.size:
        raise ValueError(f"dimension mismatch: model has {m.weights.size} weights, x has shape {x.shape}")
    return x @ m.weights + m.intercept
