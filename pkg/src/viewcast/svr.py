"""Epsilon-insensitive support vector regression with a Gaussian RBF kernel.

The dual is solved by sequential minimal optimisation (SMO) with maximal-violating-pair
working-set selection. Internally the 2n dual variables are stacked as
``beta = [alpha_plus; alpha_minus]`` with signs ``s = [+1; -1]``; the regression
coefficient of point i is ``alpha_plus[i] - alpha_minus[i]``.
"""
from __future__ import annotations

import json
import logging
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

log = logging.getLogger(__name__)

KERNEL_FORMS = ("gamma", "sigma")
TAU = 1e-12


class SolverError(RuntimeError):
    """The SMO iteration failed to improve the dual; indicates a bug, not bad data."""


@dataclass(frozen=True)
class KernelParams:
    """``form="gamma"``: exp(-sigma * d2). ``form="sigma"``: exp(-d2 / (2 sigma^2))."""

    sigma: float = 0.005
    form: str = "gamma"

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("kernel sigma must be positive")
        if self.form not in KERNEL_FORMS:
            raise ValueError(f"kernel form must be one of {KERNEL_FORMS}, got {self.form!r}")

    @property
    def gamma(self) -> float:
        """Coefficient multiplying the squared distance in the exponent."""
        if self.form == "gamma":
            return self.sigma
        return 1.0 / (2.0 * self.sigma ** 2)


@dataclass(frozen=True)
class SvrConfig:
    c: float = 10.0
    epsilon: float = 0.1
    tol: float = 1e-3
    max_iter: int = 100_000
    kernel: KernelParams = field(default_factory=KernelParams)
    gram_threshold: int = 4096
    cache_rows: int = 2048
    record_trace: bool = False

    def __post_init__(self):
        if not self.c > 0:
            raise ValueError("c must be positive")
        if not self.epsilon >= 0:
            raise ValueError("epsilon must be non-negative")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be a positive integer")


@dataclass(frozen=True)
class SvrModel:
    support_vectors: np.ndarray
    dual_coeffs: np.ndarray
    intercept: float
    kernel: KernelParams
    training_meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        sv = np.asarray(self.support_vectors, dtype=float)
        a = np.asarray(self.dual_coeffs, dtype=float).ravel()
        if sv.ndim != 2 or sv.shape[0] != a.size:
            raise ValueError("support_vectors must be K x d with one coefficient per row")
        object.__setattr__(self, "support_vectors", sv)
        object.__setattr__(self, "dual_coeffs", a)
        object.__setattr__(self, "intercept", float(self.intercept))

    @property
    def n_support(self) -> int:
        return self.dual_coeffs.size

    def to_dict(self) -> dict:
        meta = {k: v for k, v in self.training_meta.items() if k != "trace"}
        return {
            "kernel": {"sigma": self.kernel.sigma, "form": self.kernel.form},
            "support_vectors": self.support_vectors.tolist(),
            "dual_coeffs": self.dual_coeffs.tolist(),
            "intercept": self.intercept,
            "n_features": int(self.support_vectors.shape[1]),
            "training_meta": meta,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SvrModel":
        sv = np.asarray(d["support_vectors"], dtype=float).reshape(-1, int(d["n_features"]))
        return cls(sv, np.asarray(d["dual_coeffs"], dtype=float), d["intercept"],
                   KernelParams(**d["kernel"]), dict(d.get("training_meta", {})))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, s: str) -> "SvrModel":
        return cls.from_dict(json.loads(s))


def rbf_kernel(x, y, p: KernelParams = KernelParams()) -> float:
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.shape != y.shape:
        raise ValueError(f"dimension mismatch: {x.shape} vs {y.shape}")
    d = x - y
    return float(np.exp(-p.gamma * (d @ d)))


def rbf_matrix(a, b, p: KernelParams) -> np.ndarray:
    """Kernel values between every row of `a` and every row of `b`."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    if a.shape[1] != b.shape[1]:
        raise ValueError(f"dimension mismatch: {a.shape[1]} vs {b.shape[1]} features")
    if a.shape[0] == 0 or b.shape[0] == 0:
        return np.zeros((a.shape[0], b.shape[0]))
    return np.exp(-p.gamma * cdist(a, b, "sqeuclidean"))


class _KernelRows:
    """Kernel rows on demand: full Gram matrix for small n, LRU row cache otherwise."""

    def __init__(self, x: np.ndarray, p: KernelParams, gram_threshold: int, cache_rows: int):
        self.x = x
        self.p = p
        self.full = rbf_matrix(x, x, p) if x.shape[0] <= gram_threshold else None
        self.cache: OrderedDict[int, np.ndarray] = OrderedDict()
        self.capacity = max(2, cache_rows)

    def row(self, i: int) -> np.ndarray:
        if self.full is not None:
            return self.full[i]
        r = self.cache.get(i)
        if r is not None:
            self.cache.move_to_end(i)
            return r
        d = self.x - self.x[i]
        r = np.exp(-self.p.gamma * np.einsum("ij,ij->i", d, d))
        self.cache[i] = r
        if len(self.cache) > self.capacity:
            self.cache.popitem(last=False)
        return r


def _dual_objective(coef, kc, beta_sum, y, eps) -> float:
    """Dual objective in maximisation form."""
    return float(-0.5 * coef @ kc - eps * beta_sum + y @ coef)


def svr_dual_objective(coef, x, y, cfg: SvrConfig) -> float:
    """Dual objective for coefficients ``alpha_plus - alpha_minus`` with the split that
    minimises ``sum(alpha_plus + alpha_minus)``, i.e. ``|coef|``."""
    coef = np.asarray(coef, dtype=float)
    k = rbf_matrix(x, x, cfg.kernel)
    return _dual_objective(coef, k @ coef, np.abs(coef).sum(), np.asarray(y, dtype=float), cfg.epsilon)


def svr_fit(x, y, cfg: SvrConfig = SvrConfig()) -> SvrModel:
    """Train an epsilon-SVR by SMO. See the module docstring for the variable layout."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2 or x.shape[0] != y.size:
        raise ValueError(f"dimension mismatch: x{x.shape} vs y{y.shape}")
    n = y.size
    if n < 2:
        raise ValueError("svr_fit needs at least 2 training points")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValueError("svr_fit inputs must be finite")

    c, eps, tol = float(cfg.c), float(cfg.epsilon), float(cfg.tol)
    rows = _KernelRows(x, cfg.kernel, cfg.gram_threshold, cfg.cache_rows)
    a_plus = np.zeros(n)
    a_minus = np.zeros(n)
    kc = np.zeros(n)  # K @ (a_plus - a_minus)
    trace = [] if cfg.record_trace else None
    obj = 0.0
    it = 0
    gap = np.inf
    neg_inf = -np.inf

    while True:
        r = y - kc
        # score = -s * grad for each dual variable; plus-half r - eps, minus-half r + eps
        up_p = np.where(a_plus < c, r - eps, neg_inf)
        up_m = np.where(a_minus > 0, r + eps, neg_inf)
        lo_p = np.where(a_plus > 0, r - eps, np.inf)
        lo_m = np.where(a_minus < c, r + eps, np.inf)
        ip, im = int(np.argmax(up_p)), int(np.argmax(up_m))
        jp, jm = int(np.argmin(lo_p)), int(np.argmin(lo_m))
        # lowest stacked index wins ties: plus-half precedes minus-half
        if up_p[ip] >= up_m[im]:
            i, si, m_up = ip, 1, up_p[ip]
        else:
            i, si, m_up = im, -1, up_m[im]
        if lo_p[jp] <= lo_m[jm]:
            j, sj, m_lo = jp, 1, lo_p[jp]
        else:
            j, sj, m_lo = jm, -1, lo_m[jm]
        gap = m_up - m_lo
        if gap <= tol or it >= cfg.max_iter:
            break
        it += 1

        ai_arr = a_plus if si == 1 else a_minus
        aj_arr = a_plus if sj == 1 else a_minus
        ai_old, aj_old = ai_arr[i], aj_arr[j]
        # gradients of the minimisation-form objective
        gi = -si * (up_p[i] if si == 1 else up_m[i])
        gj = -sj * (lo_p[j] if sj == 1 else lo_m[j])
        ki = rows.row(i)
        kij = ki[j]
        kii = ki[i]
        kjj = rows.row(j)[j]
        qij = si * sj * kij
        ai, aj = ai_old, aj_old
        if si != sj:
            quad = kii + kjj + 2 * qij
            if quad <= 0:
                quad = TAU
            delta = (-gi - gj) / quad
            diff = ai - aj
            ai += delta
            aj += delta
            if diff > 0:
                if aj < 0:
                    aj, ai = 0.0, diff
            elif ai < 0:
                ai, aj = 0.0, -diff
            if diff > 0:
                if ai > c:
                    ai, aj = c, c - diff
            elif aj > c:
                aj, ai = c, c + diff
        else:
            quad = kii + kjj - 2 * qij
            if quad <= 0:
                quad = TAU
            delta = (gi - gj) / quad
            total = ai + aj
            ai -= delta
            aj += delta
            if total > c:
                if ai > c:
                    ai, aj = c, total - c
            elif aj < 0:
                aj, ai = 0.0, total
            if total > c:
                if aj > c:
                    aj, ai = c, total - c
            elif ai < 0:
                ai, aj = 0.0, total

        di, dj = ai - ai_old, aj - aj_old
        # change of the minimisation-form objective; must not increase
        change = gi * di + gj * dj + 0.5 * (kii * di * di + kjj * dj * dj) + qij * di * dj
        if change > 1e-10 * (1.0 + abs(obj)):
            raise SolverError(f"SMO step {it} increased the objective by {change:g}")
        obj -= change
        if trace is not None:
            trace.append(obj)

        ai_arr[i] = ai
        aj_arr[j] = aj
        kc += (si * di) * ki
        kc += (sj * dj) * rows.row(j)

    # bias from free variables, else the midpoint of the feasible interval
    r = y - kc
    free_p = (a_plus > 0) & (a_plus < c)
    free_m = (a_minus > 0) & (a_minus < c)
    n_free = int(free_p.sum() + free_m.sum())
    if n_free:
        b = float((np.sum(r[free_p] - eps) + np.sum(r[free_m] + eps)) / n_free)
    else:
        # KKT: a_plus == 0 or a_minus == c bound b from below, a_plus == c or a_minus == 0 from above
        lo_b = np.concatenate([(r - eps)[a_plus <= 0], (r + eps)[a_minus >= c]])
        hi_b = np.concatenate([(r - eps)[a_plus >= c], (r + eps)[a_minus <= 0]])
        lo = lo_b.max() if lo_b.size else -np.inf
        hi = hi_b.min() if hi_b.size else np.inf
        if np.isfinite(lo) and np.isfinite(hi):
            b = 0.5 * (lo + hi)
        else:
            b = float(lo if np.isfinite(lo) else hi)

    coef = a_plus - a_minus
    support = np.flatnonzero(coef != 0)
    converged = bool(gap <= tol)
    if not converged:
        log.warning("SMO stopped at max_iter=%d with KKT violation %.3g > tol %.3g", cfg.max_iter, gap, tol)
    meta = {
        "n_train": int(n),
        "iterations": int(it),
        "kkt_violation": float(max(gap, 0.0)),
        "converged": converged,
        "dual_objective": _dual_objective(coef, kc, float(a_plus.sum() + a_minus.sum()), y, eps),
        "n_free": n_free,
    }
    if trace is not None:
        meta["trace"] = trace
    return SvrModel(x[support].copy(), coef[support].copy(), b, cfg.kernel, meta)


def svr_predict(m: SvrModel, x, chunk: int = 4096) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or (m.n_support and x.shape[1] != m.support_vectors.shape[1]):
        raise ValueError(f"dimension mismatch: model expects {m.support_vectors.shape[1]} features, got {x.shape}")
    if m.n_support == 0:
        return np.full(x.shape[0], m.intercept)
    out = np.empty(x.shape[0])
    for s in range(0, x.shape[0], chunk):
        out[s:s + chunk] = rbf_matrix(x[s:s + chunk], m.support_vectors, m.kernel) @ m.dual_coeffs
    return out + m.intercept
