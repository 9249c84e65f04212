"""UL, ML, MRBF and Popularity-SVR predictors behind one fit/predict interface."""
from __future__ import annotations

import itertools
import json
import logging
from dataclasses import asdict, dataclass, field, replace
from typing import Any, Mapping

import numpy as np

from .features import FeatureMatrix, FeatureSpec
from .solvers import LinearModel, ols_fit, predict_linear, ridge_fit
from .svr import KernelParams, SvrConfig, SvrModel, rbf_matrix, svr_fit, svr_predict

log = logging.getLogger(__name__)

KINDS = ("UL", "ML", "MRBF", "PSVR")


@dataclass(frozen=True)
class LinearConfig:
    """UL and ML are fitted through the origin unless `intercept` is set."""

    intercept: bool = False


@dataclass(frozen=True)
class MrbfConfig:
    n_centers: int = 50
    sigma: float = 1.0
    lam: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.n_centers < 0:
            raise ValueError("n_centers must be >= 0")
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if not self.lam >= 0:
            raise ValueError("lambda must be non-negative")


def default_config(kind: str):
    kind = kind.upper()
    if kind in ("UL", "ML"):
        return LinearConfig()
    if kind == "MRBF":
        return MrbfConfig()
    if kind == "PSVR":
        return SvrConfig()
    raise ValueError(f"unknown model kind {kind!r}; expected one of {KINDS}")


def make_config(kind: str, params: Mapping[str, Any] | None = None, base=None):
    """Build a model config from loosely typed ``name -> value`` pairs (strings allowed).

    PSVR accepts ``c, epsilon, tol, max_iter, sigma, kernel_form``; MRBF accepts
    ``n_centers, sigma, lambda (or lam), seed``; UL/ML accept ``intercept``.
    """
    from .dataset import parse_bool

    kind = kind.upper()
    cfg = base if base is not None else default_config(kind)
    params = dict(params or {})
    if not params:
        return cfg
    if kind in ("UL", "ML"):
        out = {}
        for k, v in params.items():
            if k != "intercept":
                raise ValueError(f"unknown {kind} parameter {k!r}")
            out[k] = parse_bool(v)
        return replace(cfg, **out)
    if kind == "MRBF":
        out = {}
        for k, v in params.items():
            if k == "n_centers":
                out[k] = int(v)
            elif k in ("lambda", "lam"):
                out["lam"] = float(v)
            elif k == "sigma":
                out[k] = float(v)
            elif k == "seed":
                out[k] = int(v)
            else:
                raise ValueError(f"unknown MRBF parameter {k!r}")
        return replace(cfg, **out)
    if kind == "PSVR":
        out, kern = {}, {}
        for k, v in params.items():
            if k in ("c", "C", "epsilon", "tol"):
                out[k.lower()] = float(v)
            elif k == "max_iter":
                out[k] = int(v)
            elif k == "sigma":
                kern["sigma"] = float(v)
            elif k in ("kernel_form", "form"):
                kern["form"] = str(v)
            else:
                raise ValueError(f"unknown PSVR parameter {k!r}")
        if kern:
            out["kernel"] = replace(cfg.kernel, **kern)
        return replace(cfg, **out)
    raise ValueError(f"unknown model kind {kind!r}; expected one of {KINDS}")


def config_to_dict(cfg) -> dict:
    if isinstance(cfg, SvrConfig):
        return {"c": cfg.c, "epsilon": cfg.epsilon, "tol": cfg.tol, "max_iter": cfg.max_iter,
                "sigma": cfg.kernel.sigma, "kernel_form": cfg.kernel.form}
    if isinstance(cfg, MrbfConfig):
        return {"n_centers": cfg.n_centers, "sigma": cfg.sigma, "lambda": cfg.lam, "seed": cfg.seed}
    return asdict(cfg)


@dataclass(frozen=True)
class Predictor:
    """A fitted model plus the feature layout it was trained on.

    `predict` returns view counts: log-space outputs are mapped back with expm1.
    """

    kind: str
    model: LinearModel | SvrModel
    column_names: tuple[str, ...]
    log_target: bool = True
    feature_spec: FeatureSpec | None = None
    centers: np.ndarray | None = field(default=None, repr=False)
    kernel: KernelParams | None = None

    def _matrix(self, data) -> np.ndarray:
        if isinstance(data, FeatureMatrix):
            if tuple(data.column_names) != tuple(self.column_names):
                raise ValueError(f"{self.kind} predictor was fitted on a different column layout")
            if self.kind == "UL":
                if data.views_at_tr is None:
                    raise ValueError("UL needs views at t_r on the feature matrix")
                return np.log1p(data.views_at_tr)[:, None]
            return data.x
        x = np.asarray(data, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        if self.kind != "UL" and x.shape[1] != len(self.column_names):
            raise ValueError(f"{self.kind} predictor expects {len(self.column_names)} columns, got {x.shape[1]}")
        return x

    def predict_raw(self, data) -> np.ndarray:
        """Outputs in the space the model was fitted in (log space for log targets and UL)."""
        x = self._matrix(data)
        if self.kind in ("UL", "ML"):
            return predict_linear(self.model, x)
        if self.kind == "MRBF":
            return predict_linear(self.model, _mrbf_design(x, self.centers, self.kernel))
        return svr_predict(self.model, x)

    def predict(self, data) -> np.ndarray:
        out = self.predict_raw(data)
        if self.kind == "UL" or self.log_target:
            return np.expm1(out)
        return out

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "column_names": list(self.column_names), "log_target": self.log_target,
             "model": self.model.to_dict()}
        if self.feature_spec is not None:
            d["feature_spec"] = self.feature_spec.to_text()
        if self.centers is not None:
            d["centers"] = self.centers.tolist()
            d["kernel"] = {"sigma": self.kernel.sigma, "form": self.kernel.form}
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "Predictor":
        kind = d["kind"]
        model = SvrModel.from_dict(d["model"]) if kind == "PSVR" else LinearModel.from_dict(d["model"])
        spec = FeatureSpec.from_text(d["feature_spec"]) if "feature_spec" in d else None
        centers = kernel = None
        if "centers" in d:
            centers = np.asarray(d["centers"], dtype=float).reshape(-1, len(d["column_names"]))
            kernel = KernelParams(**d["kernel"])
        return cls(kind, model, tuple(d["column_names"]), d["log_target"], spec, centers, kernel)

    @classmethod
    def from_json(cls, s: str) -> "Predictor":
        return cls.from_dict(json.loads(s))


def _names(x: np.ndarray, column_names) -> tuple[str, ...]:
    return tuple(column_names) or tuple(f"x{i}" for i in range(x.shape[1]))


def ul_fit(x_single, y, intercept: bool = False) -> Predictor:
    """Log-log regression of final views on views at t_r.

    `x_single` and `y` are already log-transformed (ln(1+N)).
    """
    x = np.asarray(x_single, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.shape != y.shape:
        raise ValueError("x_single and y must have the same length")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValueError("UL inputs must be finite")
    if not np.any(x != 0):
        raise ValueError("UL regressor is all zeros")
    m = ols_fit(x[:, None], y, intercept=intercept, column_names=("log_views_at_tr",))
    return Predictor("UL", m, ("log_views_at_tr",), True)


def ml_fit(x, y, intercept: bool = False, column_names=(), log_target: bool = True) -> Predictor:
    """Linear combination of per-interval deltas, no intercept by default."""
    x = np.asarray(x, dtype=float)
    names = _names(x, column_names)
    return Predictor("ML", ols_fit(x, y, intercept, names), names, log_target)


def _mrbf_design(x: np.ndarray, centers: np.ndarray, kernel: KernelParams) -> np.ndarray:
    if centers is None or centers.shape[0] == 0:
        return x
    return np.hstack([x, rbf_matrix(x, centers, kernel)])


def mrbf_fit(x, y, cfg: MrbfConfig = MrbfConfig(), column_names=(), log_target: bool = True) -> Predictor:
    """Ridge regression on deltas augmented with RBF similarities to random training rows."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 2:
        raise ValueError("MRBF expects a 2-d feature matrix")
    n = x.shape[0]
    if cfg.n_centers > n:
        raise ValueError(f"n_centers={cfg.n_centers} exceeds the {n} training rows")
    rng = np.random.default_rng(cfg.seed)
    idx = rng.choice(n, size=cfg.n_centers, replace=False)
    centers = x[idx].copy()
    kernel = KernelParams(cfg.sigma, "sigma")
    names = _names(x, column_names)
    design = _mrbf_design(x, centers, kernel)
    design_names = names + tuple(f"rbf.{i}" for i in range(cfg.n_centers))
    m = ridge_fit(design, y, cfg.lam, intercept=False, column_names=design_names)
    return Predictor("MRBF", m, names, log_target, centers=centers, kernel=kernel)


def psvr_fit(x, y, cfg: SvrConfig = SvrConfig(), column_names=(), log_target: bool = True) -> Predictor:
    """Popularity-SVR: epsilon-SVR with a Gaussian kernel on the assembled features."""
    x = np.asarray(x, dtype=float)
    names = _names(x, column_names)
    return Predictor("PSVR", svr_fit(x, y, cfg), names, log_target)


def fit(kind: str, fm: FeatureMatrix, cfg=None) -> Predictor:
    """Fit any of the four predictors on an assembled feature matrix."""
    kind = kind.upper()
    cfg = default_config(kind) if cfg is None else cfg
    log_target = fm.spec.log_transform if fm.spec is not None else True
    if kind == "UL":
        if fm.views_at_tr is None or fm.views_at_tt is None:
            raise ValueError("UL needs views at t_r and t_t on the feature matrix")
        p = ul_fit(np.log1p(fm.views_at_tr), np.log1p(fm.views_at_tt), cfg.intercept)
    elif kind == "ML":
        p = ml_fit(fm.x, fm.y, cfg.intercept, fm.column_names, log_target)
    elif kind == "MRBF":
        p = mrbf_fit(fm.x, fm.y, cfg, fm.column_names, log_target)
    elif kind == "PSVR":
        p = psvr_fit(fm.x, fm.y, cfg, fm.column_names, log_target)
    else:
        raise ValueError(f"unknown model kind {kind!r}; expected one of {KINDS}")
    return replace(p, column_names=tuple(fm.column_names), feature_spec=fm.spec)


# ----------------------------------------------------------------------------
# grid search


@dataclass
class GridResult:
    kind: str
    best_params: dict
    best_config: Any
    best_score: float
    table: list[dict]  # one row per grid point, in grid order


def expand_grid(param_grid: Mapping[str, list]) -> list[dict]:
    if not param_grid:
        return [{}]
    keys = list(param_grid)
    for k in keys:
        if not list(param_grid[k]):
            raise ValueError(f"grid parameter {k!r} has no values")
    return [dict(zip(keys, combo)) for combo in itertools.product(*(param_grid[k] for k in keys))]


def grid_search_matrix(kind: str, param_grid: Mapping[str, list], fm: FeatureMatrix, folds,
                       base=None, threads: int = 1) -> GridResult:
    """Score every grid point by cross-validated mean Spearman; the first best point wins."""
    from .evaluation import ExperimentError, cross_validate_matrix

    points = expand_grid(param_grid)
    table = []
    best = None
    for params in points:
        row = {"params": dict(params), "mean": None, "ci95": None, "status": "ok", "error": ""}
        try:
            cfg = make_config(kind, params, base)
            rep = cross_validate_matrix(kind, cfg, fm, folds, threads=threads)
        except (ValueError, ArithmeticError, ExperimentError, np.linalg.LinAlgError) as exc:
            row["status"] = "failed"
            row["error"] = str(exc).splitlines()[0]
            log.warning("grid point %s failed: %s", params, exc)
            table.append(row)
            continue
        row["mean"] = rep.mean
        row["ci95"] = rep.ci95
        table.append(row)
        if best is None or rep.mean > best[0]:
            best = (rep.mean, params, cfg)
    if best is None:
        raise ValueError(f"all {len(points)} grid points failed for {kind}")
    return GridResult(kind.upper(), dict(best[1]), best[2], best[0], table)


def grid_search(kind: str, param_grid: Mapping[str, list], d, spec: FeatureSpec, k: int = 10,
                seed: int = 0, base=None, threads: int = 1) -> GridResult:
    from .evaluation import kfold_split
    from .features import assemble

    fm = assemble(d, spec)
    return grid_search_matrix(kind, param_grid, fm, kfold_split(len(fm), k, seed), base, threads)
