"""Design matrices from video records."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .dataset import (DAY, HOUR, SOCIAL_METRICS, VISUAL_GROUPS, Dataset, DataError, VideoRecord,
                      parse_bool, sample_grid)

GROUPS = ("views", "social", "visual")


class FeatureError(DataError):
    """Raised when records cannot be turned into features."""


def parse_duration(text) -> float:
    """Seconds from ``"6d"``, ``"6h"``, ``"90m"``, ``"3600s"`` or a bare number of seconds."""
    if isinstance(text, (int, float)):
        return float(text)
    s = str(text).strip().lower()
    scale = {"d": DAY, "h": HOUR, "m": 60.0, "s": 1.0}
    if s and s[-1] in scale:
        return float(s[:-1]) * scale[s[-1]]
    return float(s)


def format_duration(seconds: float) -> str:
    for suffix, unit in (("d", DAY), ("h", HOUR)):
        q = seconds / unit
        if q == int(q) and q != 0:
            return f"{int(q)}{suffix}"
    return f"{seconds:g}s"


@dataclass(frozen=True)
class FeatureSpec:
    """What to observe (up to `t_r`), what to predict (views at `t_t`), and how.

    Times are seconds after publication. `interval` of None means the dataset's
    native resolution.
    """

    t_r: float
    t_t: float
    interval: float | None = None
    groups: tuple[str, ...] = ("views",)
    log_transform: bool = True
    visual_groups: tuple[str, ...] = tuple(VISUAL_GROUPS)

    def __post_init__(self):
        object.__setattr__(self, "groups", tuple(self.groups))
        object.__setattr__(self, "visual_groups", tuple(self.visual_groups))
        if not self.groups:
            raise ValueError("FeatureSpec needs at least one feature group")
        bad = [g for g in self.groups if g not in GROUPS]
        if bad:
            raise ValueError(f"unknown feature groups {bad}; expected a subset of {GROUPS}")
        # canonical order views, social, visual
        object.__setattr__(self, "groups", tuple(g for g in GROUPS if g in self.groups))
        bad = [g for g in self.visual_groups if g not in VISUAL_GROUPS]
        if bad or not self.visual_groups:
            raise ValueError(f"visual_groups must be a non-empty subset of {tuple(VISUAL_GROUPS)}")
        if not self.t_t > self.t_r:
            raise ValueError(f"target time {self.t_t} must exceed reference time {self.t_r}")
        if self.interval is not None:
            self._check_interval(self.interval)

    def _check_interval(self, interval: float):
        if not interval > 0:
            raise ValueError("sampling interval must be positive")
        if self.t_r < interval:
            raise ValueError(f"reference time {self.t_r} shorter than one interval {interval}")
        r = self.t_r / interval
        if abs(r - round(r)) > 1e-9 * max(1.0, r):
            raise ValueError(f"reference time {self.t_r} is not a whole number of intervals of {interval}")

    def resolve(self, unit: float) -> "FeatureSpec":
        """Spec with a concrete interval (the native `unit` when unset)."""
        if self.interval is not None:
            return self
        self._check_interval(unit)
        return FeatureSpec(self.t_r, self.t_t, unit, self.groups, self.log_transform, self.visual_groups)

    @property
    def n_intervals(self) -> int:
        if self.interval is None:
            raise ValueError("interval unresolved; call resolve() first")
        return int(round(self.t_r / self.interval))

    def replace(self, **kw) -> "FeatureSpec":
        d = dict(t_r=self.t_r, t_t=self.t_t, interval=self.interval, groups=self.groups,
                 log_transform=self.log_transform, visual_groups=self.visual_groups)
        d.update(kw)
        return FeatureSpec(**d)

    def to_text(self) -> str:
        lines = [
            f"t_r = {format_duration(self.t_r)}",
            f"t_t = {format_duration(self.t_t)}",
        ]
        if self.interval is not None:
            lines.append(f"interval = {format_duration(self.interval)}")
        lines.append(f"groups = {'+'.join(self.groups)}")
        lines.append(f"log_transform = {str(self.log_transform).lower()}")
        if self.visual_groups != tuple(VISUAL_GROUPS):
            lines.append(f"visual_groups = {','.join(self.visual_groups)}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_mapping(cls, kv: Mapping[str, str]) -> "FeatureSpec":
        if "t_r" not in kv or "t_t" not in kv:
            raise ValueError("feature spec needs t_r and t_t")
        kwargs = dict(t_r=parse_duration(kv["t_r"]), t_t=parse_duration(kv["t_t"]))
        if kv.get("interval"):
            kwargs["interval"] = parse_duration(kv["interval"])
        if "groups" in kv:
            kwargs["groups"] = parse_groups(kv["groups"])
        if "log_transform" in kv:
            kwargs["log_transform"] = parse_bool(kv["log_transform"])
        if kv.get("visual_groups"):
            kwargs["visual_groups"] = tuple(g.strip() for g in str(kv["visual_groups"]).split(",") if g.strip())
        return cls(**kwargs)

    @classmethod
    def from_text(cls, text: str) -> "FeatureSpec":
        from .config import parse_kv
        return cls.from_mapping(parse_kv(text))


def parse_groups(text: str) -> tuple[str, ...]:
    """``"views+social"`` -> ``("views", "social")``."""
    return tuple(g.strip() for g in str(text).replace(",", "+").split("+") if g.strip())


@dataclass(frozen=True)
class FeatureMatrix:
    x: np.ndarray
    y: np.ndarray
    column_names: tuple[str, ...]
    video_ids: tuple[str, ...]
    # cumulative views at t_r and t_t in counts, kept for UL and for scoring
    views_at_tr: np.ndarray = field(repr=False, default=None)
    views_at_tt: np.ndarray = field(repr=False, default=None)
    spec: FeatureSpec | None = None

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        y = np.asarray(self.y, dtype=float)
        if x.ndim != 2 or y.ndim != 1 or x.shape[0] != y.shape[0]:
            raise FeatureError(f"inconsistent shapes x{x.shape} y{y.shape}")
        if len(self.column_names) != x.shape[1] or len(self.video_ids) != x.shape[0]:
            raise FeatureError("column_names / video_ids do not match matrix dimensions")
        if len(set(self.column_names)) != len(self.column_names):
            raise FeatureError("column names must be unique")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise FeatureError("feature matrix contains non-finite entries")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "column_names", tuple(self.column_names))
        object.__setattr__(self, "video_ids", tuple(self.video_ids))
        for name in ("views_at_tr", "views_at_tt"):
            v = getattr(self, name)
            object.__setattr__(self, name, None if v is None else np.asarray(v, dtype=float))

    def __len__(self):
        return self.x.shape[0]

    def rows(self, idx) -> "FeatureMatrix":
        idx = np.asarray(idx)
        return FeatureMatrix(
            self.x[idx], self.y[idx], self.column_names, tuple(self.video_ids[i] for i in idx),
            None if self.views_at_tr is None else self.views_at_tr[idx],
            None if self.views_at_tt is None else self.views_at_tt[idx],
            self.spec)


def _grid(spec: FeatureSpec) -> np.ndarray:
    return np.arange(spec.n_intervals + 1) * spec.interval


def _deltas(r: VideoRecord, metric: str, spec: FeatureSpec) -> np.ndarray:
    s = r.series.get(metric)
    if s is None:
        raise FeatureError(f"record {r.id!r} has no {metric!r} series")
    if s.last_t < spec.t_r:
        raise FeatureError(f"record {r.id!r}: {metric} series ends at {s.last_t:g}s, before t_r={spec.t_r:g}s")
    d = np.diff(sample_grid(r, metric, _grid(spec)))
    # interpolation round-off can produce -0.0-ish noise on flat stretches
    d = np.maximum(d, 0.0)
    return np.log1p(d) if spec.log_transform else d


def view_deltas(r: VideoRecord, spec: FeatureSpec) -> np.ndarray:
    """Per-interval view increments up to t_r, ln(1+d) when log_transform is on."""
    if spec.interval is None:
        raise ValueError("spec.interval must be set; use spec.resolve(dataset.unit)")
    return _deltas(r, "views", spec)


def social_deltas(r: VideoRecord, spec: FeatureSpec) -> np.ndarray:
    """Likes, comments and shares increments concatenated in that order."""
    if spec.interval is None:
        raise ValueError("spec.interval must be set; use spec.resolve(dataset.unit)")
    return np.concatenate([_deltas(r, m, spec) for m in SOCIAL_METRICS])


def normalize_deep(v) -> np.ndarray:
    """Scale a non-negative vector so that it sums to one."""
    v = np.asarray(v, dtype=float)
    if np.any(v < 0) or not np.all(np.isfinite(v)):
        raise ValueError("deep feature vector must be finite and non-negative")
    total = v.sum()
    if total <= 0:
        raise ValueError("cannot normalise an all-zero vector")
    out = v / total
    # a second pass absorbs the rounding of the first division
    return out / out.sum()


def visual_vector(r: VideoRecord, groups=tuple(VISUAL_GROUPS)) -> np.ndarray:
    if r.visual is None:
        raise FeatureError(f"record {r.id!r} has no visual features")
    parts = []
    for g in groups:
        vals = getattr(r.visual, g)
        if vals is None:
            raise FeatureError(f"record {r.id!r} lacks visual group {g!r}")
        parts.append(normalize_deep(vals) if g == "deep" else np.asarray(vals, dtype=float))
    return np.concatenate(parts)


def column_names(spec: FeatureSpec) -> list[str]:
    r = spec.n_intervals
    names = []
    if "views" in spec.groups:
        names += [f"views.{i}" for i in range(1, r + 1)]
    if "social" in spec.groups:
        names += [f"{m}.{i}" for m in SOCIAL_METRICS for i in range(1, r + 1)]
    if "visual" in spec.groups:
        names += [f"{g}.{f}" for g in spec.visual_groups for f in VISUAL_GROUPS[g]]
    return names


def assemble(d: Dataset, spec: FeatureSpec) -> FeatureMatrix:
    """Build the design matrix and targets for every record of `d`.

    Any record that cannot be featurised aborts the whole assembly; the error lists
    the offending ids.
    """
    spec = spec.resolve(d.unit)
    rows, ref, fin, failures = [], [], [], []
    for r in d.records:
        try:
            s = r.series.get("views")
            if s is None or s.last_t < spec.t_t:
                raise FeatureError(f"record {r.id!r}: views do not reach t_t={spec.t_t:g}s")
            parts = []
            if "views" in spec.groups:
                parts.append(view_deltas(r, spec))
            if "social" in spec.groups:
                parts.append(social_deltas(r, spec))
            if "visual" in spec.groups:
                parts.append(visual_vector(r, spec.visual_groups))
            n_tr = sample_grid(r, "views", [spec.t_r, spec.t_t])
        except DataError as exc:
            failures.append((r.id, str(exc)))
            continue
        rows.append(np.concatenate(parts))
        ref.append(n_tr[0])
        fin.append(n_tr[1])
    if failures:
        ids = ", ".join(i for i, _ in failures[:10])
        more = f" (+{len(failures) - 10} more)" if len(failures) > 10 else ""
        raise FeatureError(f"{len(failures)} record(s) failed feature assembly: {ids}{more}; first: {failures[0][1]}")
    names = column_names(spec)
    fin = np.asarray(fin, dtype=float)
    y = np.log1p(fin) if spec.log_transform else fin
    x = np.vstack(rows) if rows else np.zeros((0, len(names)))
    return FeatureMatrix(x, y, tuple(names), tuple(r.id for r in d.records),
                         np.asarray(ref, dtype=float), fin, spec)
