"""Cross-validation harness: Spearman scoring, confidence intervals, t-tests,
reference-time sweeps and runtime benchmarks."""
from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np
from scipy import stats

from .dataset import Dataset
from .features import FeatureMatrix, FeatureSpec, assemble
from .models import config_to_dict, default_config, fit

log = logging.getLogger(__name__)


class ExperimentError(RuntimeError):
    pass


# ----------------------------------------------------------------------------
# statistics


def _ranks(a: np.ndarray) -> np.ndarray:
    return stats.rankdata(a, method="average")


def spearman(a, b) -> float:
    """Pearson correlation of average ranks. Constant inputs raise ValueError."""
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if a.size != b.size:
        raise ValueError(f"length mismatch: {a.size} vs {b.size}")
    if a.size < 2:
        raise ValueError("spearman needs at least 2 observations")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise ValueError("spearman inputs must be finite")
    ra = _ranks(a)
    rb = _ranks(b)
    ra -= ra.mean()
    rb -= rb.mean()
    den = math.sqrt(float(ra @ ra) * float(rb @ rb))
    if den == 0:
        raise ValueError("spearman correlation undefined for a constant input")
    return max(-1.0, min(1.0, float(ra @ rb) / den))


def t_halfwidth(values, level: float = 0.95) -> float:
    v = np.asarray(values, dtype=float)
    k = v.size
    if k < 2:
        return 0.0
    return float(stats.t.ppf(0.5 + level / 2, k - 1) * v.std(ddof=1) / math.sqrt(k))


def normal_halfwidth(values, level: float = 0.95) -> float:
    v = np.asarray(values, dtype=float)
    if v.size < 2:
        return 0.0
    return float(stats.norm.ppf(0.5 + level / 2) * v.std(ddof=1) / math.sqrt(v.size))


def welch_t(a, b) -> tuple[float, float]:
    """Welch's t statistic and Welch-Satterthwaite degrees of freedom."""
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if a.size < 2 or b.size < 2:
        raise ValueError("t-test needs at least 2 observations per sample")
    va, vb = a.var(ddof=1) / a.size, b.var(ddof=1) / b.size
    if va == 0 and vb == 0:
        raise ValueError("t-test undefined: both samples have zero variance")
    t = (a.mean() - b.mean()) / math.sqrt(va + vb)
    df = (va + vb) ** 2 / (va ** 2 / (a.size - 1) + vb ** 2 / (b.size - 1))
    return float(t), float(df)


def ttest(a, b, paired: bool = False) -> float:
    """Two-sided p-value; Welch two-sample by default, paired t-test on request."""
    if paired:
        a = np.asarray(a, dtype=float).ravel()
        b = np.asarray(b, dtype=float).ravel()
        if a.size != b.size or a.size < 2:
            raise ValueError("paired t-test needs two equal-length samples of size >= 2")
        d = a - b
        sd = d.std(ddof=1)
        if sd == 0:
            if d.mean() == 0:
                return 1.0
            raise ValueError("paired t-test undefined: constant non-zero differences")
        t = d.mean() / (sd / math.sqrt(d.size))
        return float(2 * stats.t.sf(abs(t), d.size - 1))
    t, df = welch_t(a, b)
    return float(2 * stats.t.sf(abs(t), df))


# ----------------------------------------------------------------------------
# folds


@dataclass(frozen=True)
class FoldAssignment:
    n: int
    k: int
    seed: int
    assignment: np.ndarray = field(repr=False)

    def test_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignment == fold)

    def train_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignment != fold)

    def sizes(self) -> list[int]:
        return np.bincount(self.assignment, minlength=self.k).tolist()

    def __eq__(self, other):
        if not isinstance(other, FoldAssignment):
            return NotImplemented
        return (self.n, self.k, self.seed) == (other.n, other.k, other.seed) and \
            np.array_equal(self.assignment, other.assignment)

    def __hash__(self):
        return hash((self.n, self.k, self.seed, self.assignment.tobytes()))


def kfold_split(n: int, k: int, seed: int) -> FoldAssignment:
    """Random permutation cut into k folds whose sizes differ by at most one."""
    if k < 2:
        raise ValueError("need at least 2 folds")
    if k > n:
        raise ValueError(f"cannot split {n} records into {k} folds")
    perm = np.random.default_rng(seed).permutation(n)
    assignment = np.empty(n, dtype=int)
    for f, chunk in enumerate(np.array_split(perm, k)):
        assignment[chunk] = f
    assignment.flags.writeable = False
    return FoldAssignment(n, k, seed, assignment)


# ----------------------------------------------------------------------------
# cross-validation


@dataclass
class EvalReport:
    method: str
    config: dict
    per_fold_scores: list[float]
    per_fold_predictions: list[np.ndarray] = field(repr=False)
    per_fold_truth: list[np.ndarray] = field(repr=False)
    per_fold_test_indices: list[np.ndarray] = field(repr=False)
    fit_ms: list[float] = field(default_factory=list)
    predict_ms: list[float] = field(default_factory=list)

    @property
    def mean(self) -> float:
        return float(np.mean(self.per_fold_scores))

    @property
    def ci95(self) -> float:
        return t_halfwidth(self.per_fold_scores)

    @property
    def ci95_normal(self) -> float:
        return normal_halfwidth(self.per_fold_scores)

    def summary(self) -> dict:
        """Deterministic summary (timings excluded)."""
        return {"method": self.method, "config": self.config, "mean": self.mean, "ci95": self.ci95,
                "ci95_normal": self.ci95_normal, "per_fold_scores": list(self.per_fold_scores)}


FitFn = Callable[[FeatureMatrix], Any]


def _method_label(kind) -> str:
    return kind.upper() if isinstance(kind, str) else getattr(kind, "__name__", "custom")


def cross_validate_matrix(kind, cfg, fm: FeatureMatrix, folds: FoldAssignment, threads: int = 1,
                          label: str | None = None) -> EvalReport:
    """k-fold CV on an assembled matrix.

    `kind` is a model kind or a callable ``fm_train -> object with predict(fm)``.
    Held-out predictions are scored against the true view count at t_t.
    """
    if folds.n != len(fm):
        raise ExperimentError(f"fold assignment covers {folds.n} rows but the matrix has {len(fm)}")
    truth_all = fm.views_at_tt if fm.views_at_tt is not None else fm.y
    if isinstance(kind, str) and cfg is None:
        cfg = default_config(kind)

    def run(f: int):
        tr, te = folds.train_indices(f), folds.test_indices(f)
        train, test = fm.rows(tr), fm.rows(te)
        try:
            t0 = time.perf_counter()
            model = fit(kind, train, cfg) if isinstance(kind, str) else kind(train)
            t1 = time.perf_counter()
            pred = np.asarray(model.predict(test), dtype=float)
            t2 = time.perf_counter()
            score = spearman(pred, truth_all[te])
        except Exception as exc:
            raise ExperimentError(f"{_method_label(kind)} fold {f}: {type(exc).__name__}: {exc}") from exc
        return score, pred, truth_all[te], te, (t1 - t0) * 1e3, (t2 - t1) * 1e3

    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            results = list(ex.map(run, range(folds.k)))
    else:
        results = [run(f) for f in range(folds.k)]
    return EvalReport(
        label or _method_label(kind),
        config_to_dict(cfg) if cfg is not None else {},
        [r[0] for r in results], [r[1] for r in results], [r[2] for r in results],
        [r[3] for r in results], [r[4] for r in results], [r[5] for r in results])


def cross_validate(kind, cfg, d: Dataset, spec: FeatureSpec, folds: FoldAssignment,
                   threads: int = 1, label: str | None = None) -> EvalReport:
    return cross_validate_matrix(kind, cfg, assemble(d, spec), folds, threads, label)


def fold_averaged_pvalue(a: EvalReport, b: EvalReport, paired: bool = False) -> float:
    """Mean over folds of the t-test p-value between two methods' held-out predictions."""
    if len(a.per_fold_predictions) != len(b.per_fold_predictions):
        raise ValueError("reports have different fold counts")
    return float(np.mean([ttest(pa, pb, paired)
                          for pa, pb in zip(a.per_fold_predictions, b.per_fold_predictions)]))


# ----------------------------------------------------------------------------
# sweeps and benchmarks


@dataclass(frozen=True)
class Method:
    """A named model kind with its configuration."""

    name: str
    kind: str
    config: Any = None

    def resolved(self):
        return self.config if self.config is not None else default_config(self.kind)


def as_methods(kinds: Sequence) -> list[Method]:
    out = []
    for k in kinds:
        out.append(k if isinstance(k, Method) else Method(str(k).upper(), str(k).upper()))
    return out


@dataclass
class SweepResult:
    folds: FoldAssignment
    rows: list[dict]  # long format: method, t_r, fold, score, fit_ms, predict_ms
    reports: dict  # (method, t_r) -> EvalReport

    def summary(self) -> list[dict]:
        return [{"method": m, "t_r": t, "mean": r.mean, "ci95": r.ci95}
                for (m, t), r in self.reports.items()]

    def mean_by_method(self) -> dict[str, list[tuple[float, float]]]:
        out: dict[str, list] = {}
        for (m, t), r in self.reports.items():
            out.setdefault(m, []).append((t, r.mean))
        return {m: sorted(v) for m, v in out.items()}


def sweep_tr(kinds, d: Dataset, t_r_list: Sequence[float], t_t: float, folds: FoldAssignment,
             base_spec: FeatureSpec | None = None, threads: int = 1) -> SweepResult:
    """Cross-validate every method at every reference time with one shared fold assignment."""
    methods = as_methods(kinds)
    bad = [t for t in t_r_list if not t < t_t]
    if bad:
        raise ValueError(f"reference times {bad} are not before t_t={t_t}")
    rows, reports = [], {}
    for t_r in t_r_list:
        spec = FeatureSpec(t_r, t_t) if base_spec is None else base_spec.replace(t_r=t_r, t_t=t_t)
        fm = assemble(d, spec)
        for m in methods:
            rep = cross_validate_matrix(m.kind, m.resolved(), fm, folds, threads, m.name)
            reports[(m.name, t_r)] = rep
            for f, s in enumerate(rep.per_fold_scores):
                rows.append({"method": m.name, "t_r": t_r, "fold": f, "score": s,
                             "fit_ms": rep.fit_ms[f], "predict_ms": rep.predict_ms[f]})
    return SweepResult(folds, rows, reports)


def bench_runtime(kinds, d: Dataset, spec: FeatureSpec, subset_sizes: Sequence[int], repeats: int = 3,
                  seed: int = 0, probe_size: int = 1000) -> list[dict]:
    """Fit/predict wall-clock per method and training-subset size.

    Subsets are nested prefixes of one seeded permutation; prediction always runs on the
    same probe rows so predict cost is comparable across sizes. Runs are serial, and each
    method gets one untimed warm-up fit so first-call overhead does not skew the smallest size.
    """
    methods = as_methods(kinds)
    fm = assemble(d, spec)
    n = len(fm)
    if any(s > n or s < 2 for s in subset_sizes):
        raise ValueError(f"subset sizes must lie in [2, {n}]")
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    perm = np.random.default_rng(seed).permutation(n)
    probe = fm.rows(np.sort(perm[-min(probe_size, n):]))
    rows = []
    for m in methods:
        cfg = m.resolved()
        fit(m.kind, fm.rows(np.sort(perm[:min(subset_sizes)])), cfg).predict(probe)
        for size in sorted(subset_sizes):
            train = fm.rows(np.sort(perm[:size]))
            for rep in range(repeats):
                t0 = time.perf_counter()
                model = fit(m.kind, train, cfg)
                t1 = time.perf_counter()
                model.predict(probe)
                t2 = time.perf_counter()
                rows.append({"method": m.name, "subset_size": size, "repeat": rep,
                             "fit_ms": (t1 - t0) * 1e3, "predict_ms": (t2 - t1) * 1e3})
    return rows


def bench_summary(rows: list[dict]) -> list[dict]:
    """Mean fit/predict time per (method, subset_size)."""
    groups: dict = {}
    for r in rows:
        groups.setdefault((r["method"], r["subset_size"]), []).append(r)
    return [{"method": m, "subset_size": s,
             "fit_ms": float(np.mean([r["fit_ms"] for r in g])),
             "predict_ms": float(np.mean([r["predict_ms"] for r in g]))}
            for (m, s), g in groups.items()]
