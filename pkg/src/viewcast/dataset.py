"""Video popularity datasets: records, CSV ingestion, preprocessing, synthesis.

A record holds cumulative counters (views, likes, comments, shares) sampled at
offsets (seconds) from publication. Counters never decrease.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

log = logging.getLogger(__name__)

METRICS = ("views", "likes", "comments", "shares")
SOCIAL_METRICS = ("likes", "comments", "shares")

HOUR = 3600.0
DAY = 86400.0
RESOLUTIONS = {"hour": HOUR, "day": DAY}

# schema id -> (required metrics, default resolution)
SCHEMAS = {
    "youtube": (("views",), "day"),
    "facebook": (METRICS, "hour"),
    "generic": (("views",), "day"),
}

TIMESERIES_HEADER = ["video_id", "published_at_epoch", "metric", "t_offset_seconds", "value"]


class DataError(ValueError):
    """Raised when a dataset file or record is unusable."""


@dataclass(frozen=True)
class Diagnostic:
    line: int
    video_id: str
    metric: str
    message: str

    def __str__(self):
        return f"line {self.line}: video {self.video_id!r} metric {self.metric!r}: {self.message}"


class Series:
    """Immutable cumulative series: strictly increasing offsets, non-decreasing values."""

    __slots__ = ("t", "v")

    def __init__(self, t, v):
        t = np.array(t, dtype=float)
        v = np.array(v, dtype=float)
        if t.ndim != 1 or t.shape != v.shape or t.size == 0:
            raise DataError("series needs matching non-empty 1-d offset and value arrays")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(v))):
            raise DataError("series contains non-finite entries")
        if t[0] < 0 or np.any(v < 0):
            raise DataError("series offsets and values must be non-negative")
        if np.any(np.diff(t) <= 0):
            raise DataError("series offsets must be strictly increasing")
        if np.any(np.diff(v) < 0):
            raise DataError("series values must be non-decreasing")
        t.flags.writeable = False
        v.flags.writeable = False
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "v", v)

    def __setattr__(self, name, value):
        raise AttributeError("Series is immutable")

    def __len__(self):
        return self.t.size

    def __eq__(self, other):
        if not isinstance(other, Series):
            return NotImplemented
        return np.array_equal(self.t, other.t) and np.array_equal(self.v, other.v)

    def __hash__(self):
        return hash((self.t.tobytes(), self.v.tobytes()))

    def __repr__(self):
        return f"Series(n={len(self)}, last=({self.t[-1]:g}, {self.v[-1]:g}))"

    @property
    def last_t(self) -> float:
        return float(self.t[-1])

    def anchored(self):
        """Offsets and values with an implicit (0, 0) publication sample prepended when absent."""
        if self.t[0] > 0:
            return np.concatenate(([0.0], self.t)), np.concatenate(([0.0], self.v))
        return self.t, self.v


# Visual feature groups in flattening order; field names per group.
VISUAL_GROUPS: dict[str, tuple[str, ...]] = {
    "video_characteristics": ("length_s", "frame_count", "resolution_class", "frame_width", "frame_height"),
    "color": tuple(f"hist_{i}" for i in range(10)) + ("dominant_index",),
    "face": ("faces_per_frame", "frames_with_faces", "face_area_ratio"),
    "text": ("frames_with_text", "text_area_ratio"),
    "scene_dynamics": ("shot_count", "mean_shot_length_s", "hard_cuts", "soft_cuts"),
    "clutter": ("edge_ratio",),
    "rigidity": ("homography_fraction",),
    "thumbnail": ("popularity_score",),
    "deep": tuple(f"{i:04d}" for i in range(1000)),
}
_FRACTION_FIELDS = {
    "face": ("frames_with_faces", "face_area_ratio"),
    "text": ("frames_with_text", "text_area_ratio"),
    "clutter": ("edge_ratio",),
    "rigidity": ("homography_fraction",),
}


@dataclass(frozen=True)
class VisualFeatures:
    """Precomputed per-video visual descriptors. Each group is a tuple of floats or None."""

    video_characteristics: tuple | None = None
    color: tuple | None = None
    face: tuple | None = None
    text: tuple | None = None
    scene_dynamics: tuple | None = None
    clutter: tuple | None = None
    rigidity: tuple | None = None
    thumbnail: tuple | None = None
    deep: tuple | None = None

    def __post_init__(self):
        for name, names in VISUAL_GROUPS.items():
            values = getattr(self, name)
            if values is None:
                continue
            values = tuple(float(x) for x in values)
            object.__setattr__(self, name, values)
            if len(values) != len(names):
                raise DataError(f"visual group {name!r} needs {len(names)} values, got {len(values)}")
            if not all(math.isfinite(x) for x in values):
                raise DataError(f"visual group {name!r} has non-finite values")
        if self.color is not None:
            hist = self.color[:10]
            if min(hist) < 0 or abs(sum(hist) - 1.0) > 1e-6:
                raise DataError("color histogram must be non-negative and sum to 1")
        for group, names in _FRACTION_FIELDS.items():
            values = getattr(self, group)
            if values is None:
                continue
            for fname in names:
                x = values[VISUAL_GROUPS[group].index(fname)]
                if not 0.0 <= x <= 1.0:
                    raise DataError(f"visual field {group}.{fname}={x} outside [0, 1]")
        if self.deep is not None and min(self.deep) < 0:
            raise DataError("deep feature entries must be non-negative")

    def present_groups(self) -> tuple[str, ...]:
        return tuple(g for g in VISUAL_GROUPS if getattr(self, g) is not None)


@dataclass(frozen=True)
class VideoRecord:
    id: str
    published_at: int
    series: Mapping[str, Series]
    visual: VisualFeatures | None = None
    archetype: str | None = None

    def __post_init__(self):
        unknown = set(self.series) - set(METRICS)
        if unknown:
            raise DataError(f"record {self.id!r}: unknown metrics {sorted(unknown)}")
        # canonical metric order so equality and iteration are stable
        object.__setattr__(self, "series", {m: self.series[m] for m in METRICS if m in self.series})

    def __eq__(self, other):
        if not isinstance(other, VideoRecord):
            return NotImplemented
        return (self.id, self.published_at, dict(self.series), self.visual, self.archetype) == (
            other.id, other.published_at, dict(other.series), other.visual, other.archetype)

    def __hash__(self):
        return hash((self.id, self.published_at))

    def has(self, metric: str) -> bool:
        return metric in self.series


@dataclass(frozen=True)
class Dataset:
    records: tuple[VideoRecord, ...]
    resolution: str = "day"
    name: str = "dataset"
    rejected: tuple[Diagnostic, ...] = field(default=(), compare=False)

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        object.__setattr__(self, "rejected", tuple(self.rejected))
        if self.resolution not in RESOLUTIONS:
            raise DataError(f"resolution must be one of {sorted(RESOLUTIONS)}, got {self.resolution!r}")
        ids = [r.id for r in self.records]
        if len(set(ids)) != len(ids):
            dup = sorted({i for i in ids if ids.count(i) > 1})
            raise DataError(f"duplicate record ids: {dup[:5]}")

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    @property
    def unit(self) -> float:
        """Native sampling unit in seconds."""
        return RESOLUTIONS[self.resolution]

    def subset(self, indices: Iterable[int]) -> "Dataset":
        return Dataset(tuple(self.records[i] for i in indices), self.resolution, self.name)

    def with_visual(self, visual: Mapping[str, VisualFeatures]) -> "Dataset":
        recs = tuple(
            VideoRecord(r.id, r.published_at, r.series, visual.get(r.id, r.visual), r.archetype)
            for r in self.records)
        return Dataset(recs, self.resolution, self.name, self.rejected)


def sample_at(r: VideoRecord, metric: str, t: float) -> float:
    """Cumulative count of `metric` at offset `t`, linearly interpolated between samples.

    An implicit (0, 0) sample at publication is assumed when the series starts later.
    Extrapolation past the last sample is refused.
    """
    if metric not in r.series:
        raise DataError(f"record {r.id!r} has no {metric!r} series")
    s = r.series[metric]
    if t < 0 or t > s.last_t:
        raise DataError(f"record {r.id!r}: offset {t} outside [0, {s.last_t}] for {metric!r}")
    ts, vs = s.anchored()
    return float(np.interp(t, ts, vs))


def sample_grid(r: VideoRecord, metric: str, times) -> np.ndarray:
    """Vectorised `sample_at` over an array of offsets."""
    if metric not in r.series:
        raise DataError(f"record {r.id!r} has no {metric!r} series")
    s = r.series[metric]
    times = np.asarray(times, dtype=float)
    if times.size and (times.min() < 0 or times.max() > s.last_t):
        raise DataError(f"record {r.id!r}: offsets outside [0, {s.last_t}] for {metric!r}")
    ts, vs = s.anchored()
    return np.interp(times, ts, vs)


# ----------------------------------------------------------------------------
# CSV I/O


def _fmt(x: float) -> str:
    x = float(x)
    if x.is_integer() and abs(x) < 2**53:
        return str(int(x))
    return repr(x)


def load_dataset(path, schema: str = "youtube", resolution: str | None = None,
                 name: str | None = None) -> Dataset:
    """Read a long-format time-series CSV.

    Malformed rows raise DataError naming the line and field. Samples that break a
    series' ordering or monotonicity are dropped and reported in ``Dataset.rejected``.
    Records missing a metric the schema requires are dropped with a diagnostic too.
    """
    if schema not in SCHEMAS:
        raise DataError(f"unknown schema id {schema!r}; expected one of {sorted(SCHEMAS)}")
    required, default_res = SCHEMAS[schema]
    path = Path(path)
    if not path.exists():
        raise DataError(f"dataset file not found: {path}")

    published: dict[str, int] = {}
    samples: dict[str, dict[str, list[tuple[float, float]]]] = {}
    diagnostics: list[Diagnostic] = []

    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataError(f"{path}: empty file")
        if [h.strip() for h in header] != TIMESERIES_HEADER:
            raise DataError(f"{path}: line 1: expected header {','.join(TIMESERIES_HEADER)}")
        nrows = 0
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            nrows += 1
            if len(row) != 5:
                raise DataError(f"{path}: line {line}: expected 5 fields, got {len(row)}")
            vid, pub, metric, t_s, v_s = (c.strip() for c in row)
            if not vid:
                raise DataError(f"{path}: line {line}: field video_id is empty")
            try:
                pub_i = int(pub)
            except ValueError:
                raise DataError(f"{path}: line {line}: field published_at_epoch={pub!r} is not an integer") from None
            if metric not in METRICS:
                raise DataError(f"{path}: line {line}: field metric={metric!r} not one of {METRICS}")
            try:
                t = float(t_s)
            except ValueError:
                raise DataError(f"{path}: line {line}: field t_offset_seconds={t_s!r} is not a number") from None
            try:
                v = float(v_s)
            except ValueError:
                raise DataError(f"{path}: line {line}: field value={v_s!r} is not a number") from None
            if not math.isfinite(t) or t < 0:
                raise DataError(f"{path}: line {line}: field t_offset_seconds={t_s!r} must be finite and >= 0")
            if not math.isfinite(v) or v < 0:
                raise DataError(f"{path}: line {line}: field value={v_s!r} must be finite and >= 0")
            if published.setdefault(vid, pub_i) != pub_i:
                raise DataError(f"{path}: line {line}: field published_at_epoch disagrees with earlier rows of {vid!r}")
            samples.setdefault(vid, {}).setdefault(metric, []).append((t, v, line))
        if nrows == 0:
            raise DataError(f"{path}: empty file (no data rows)")

    records = []
    for vid, by_metric in samples.items():
        series = {}
        for metric, rows in by_metric.items():
            rows.sort(key=lambda x: (x[0], x[2]))
            kept_t, kept_v = [], []
            for t, v, line in rows:
                if kept_t and t == kept_t[-1]:
                    diagnostics.append(Diagnostic(line, vid, metric, f"duplicate offset {t:g}"))
                    continue
                if kept_v and v < kept_v[-1]:
                    diagnostics.append(Diagnostic(
                        line, vid, metric, f"{metric} decreases from {kept_v[-1]:g} to {v:g} at offset {t:g}"))
                    continue
                kept_t.append(t)
                kept_v.append(v)
            series[metric] = Series(kept_t, kept_v)
        missing = [m for m in required if m not in series]
        if missing:
            diagnostics.append(Diagnostic(0, vid, ",".join(missing), f"missing metric(s) required by schema {schema!r}"))
            continue
        records.append(VideoRecord(vid, published[vid], series))

    for d in diagnostics:
        log.warning("rejected %s", d)
    return Dataset(tuple(records), resolution or default_res, name or path.stem, tuple(diagnostics))


def save_dataset(d: Dataset, path) -> None:
    """Write the long-format time-series CSV read by `load_dataset`."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with tmp.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TIMESERIES_HEADER)
        for r in d.records:
            for metric, s in r.series.items():
                for t, v in zip(s.t, s.v):
                    w.writerow([r.id, r.published_at, metric, _fmt(t), _fmt(v)])
    tmp.replace(path)


def visual_columns(groups: Sequence[str] | None = None) -> list[str]:
    groups = list(VISUAL_GROUPS) if groups is None else list(groups)
    return [f"{g}.{f}" for g in groups for f in VISUAL_GROUPS[g]]


def load_visual_features(path) -> dict[str, VisualFeatures]:
    """Read the wide visual-features CSV. Groups whose columns are all absent are left unset."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"visual features file not found: {path}")
    out: dict[str, VisualFeatures] = {}
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header:
            raise DataError(f"{path}: empty file")
        header = [h.strip() for h in header]
        if header[0] != "video_id":
            raise DataError(f"{path}: line 1: first column must be video_id")
        index = {h: i for i, h in enumerate(header)}
        known = set(visual_columns())
        unknown = [h for h in header[1:] if h not in known]
        if unknown:
            raise DataError(f"{path}: line 1: unknown visual columns {unknown[:5]}")
        groups = []
        for g in VISUAL_GROUPS:
            cols = visual_columns([g])
            have = [c in index for c in cols]
            if all(have):
                groups.append(g)
            elif any(have):
                raise DataError(f"{path}: line 1: visual group {g!r} is incomplete")
        for row in reader:
            line = reader.line_num
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(f"{path}: line {line}: expected {len(header)} fields, got {len(row)}")
            vid = row[0].strip()
            kwargs = {}
            for g in groups:
                vals = []
                for c in visual_columns([g]):
                    cell = row[index[c]].strip()
                    try:
                        vals.append(float(cell))
                    except ValueError:
                        raise DataError(f"{path}: line {line}: field {c}={cell!r} is not a number") from None
                kwargs[g] = tuple(vals)
            try:
                out[vid] = VisualFeatures(**kwargs)
            except DataError as exc:
                raise DataError(f"{path}: line {line}: {exc}") from None
    return out


def save_visual_features(visual: Mapping[str, VisualFeatures], path) -> None:
    items = list(visual.items())
    if not items:
        raise DataError("no visual features to write")
    groups = items[0][1].present_groups()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with tmp.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["video_id"] + visual_columns(groups))
        for vid, vf in items:
            if vf.present_groups() != groups:
                raise DataError(f"video {vid!r} has a different set of visual groups")
            w.writerow([vid] + [_fmt(x) for g in groups for x in getattr(vf, g)])
    tmp.replace(path)


# ----------------------------------------------------------------------------
# preprocessing


def preprocess(d: Dataset, min_horizon: float) -> Dataset:
    """Keep records with a views series reaching `min_horizon` seconds and no sampling gap
    wider than twice the dataset resolution (the publication anchor counts as a sample)."""
    if not min_horizon > 0:
        raise ValueError("min_horizon must be positive")
    max_gap = 2.0 * d.unit
    kept = []
    for r in d.records:
        s = r.series.get("views")
        if s is None or s.last_t < min_horizon:
            continue
        ts, _ = s.anchored()
        if np.any(np.diff(ts) > max_gap):
            continue
        kept.append(r)
    log.info("preprocess kept %d of %d records", len(kept), len(d.records))
    return Dataset(tuple(kept), d.resolution, d.name, d.rejected)


# ----------------------------------------------------------------------------
# synthetic data

ARCHETYPES = ("power", "logistic", "linear")


@dataclass
class SynthConfig:
    """Knobs for `synthesize`.

    Archetypes (per video, views cumulative N(t), H = horizon):

    * ``power``: ln(1 + N(t)) = L * (t / H) ** power_exponent. For this family
      ln(1+N(t2)) / ln(1+N(t1)) = (t2/t1) ** power_exponent for every video.
    * ``logistic``: a late or early burst, N(t) = K * (s(t) - s(0)) with s a logistic
      centred at a random time.
    * ``linear``: N(t) = rate * t.

    `noise` is the log-normal sigma applied multiplicatively to every increment.
    """

    n: int = 100
    horizon_days: float = 30.0
    archetypes: dict = field(default_factory=lambda: {"power": 0.5, "logistic": 0.5})
    noise: float = 0.0
    seed: int = 0
    resolution: str = "day"
    power_exponent: float = 0.5
    social: bool = False
    visual: bool = False
    name: str = "synthetic"

    @property
    def horizon(self) -> float:
        return self.horizon_days * DAY

    @classmethod
    def from_mapping(cls, kv: Mapping[str, str]) -> "SynthConfig":
        known = {f.name for f in fields(cls)}
        extra = set(kv) - known
        if extra:
            raise ValueError(f"unknown synth config keys: {sorted(extra)}")
        out = cls()
        for k, v in kv.items():
            if k == "archetypes":
                out.archetypes = parse_archetypes(v)
            elif k in ("n", "seed"):
                setattr(out, k, int(v))
            elif k in ("horizon_days", "noise", "power_exponent"):
                setattr(out, k, float(v))
            elif k in ("social", "visual"):
                setattr(out, k, parse_bool(v))
            else:
                setattr(out, k, v)
        return out


def parse_bool(v) -> bool:
    if isinstance(v, bool):
        return v
    s = str(v).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


def parse_archetypes(text: str) -> dict:
    """``"power:0.5,logistic:0.5"`` -> ``{"power": 0.5, "logistic": 0.5}``."""
    out = {}
    for part in str(text).split(","):
        part = part.strip()
        if not part:
            continue
        name, _, w = part.partition(":")
        out[name.strip()] = float(w) if w else 1.0
    return out


def _views_curve(kind: str, rng: np.random.Generator, grid: np.ndarray, horizon: float, power_exponent: float):
    """Noise-free cumulative views on `grid` (grid[0] == 0)."""
    u = grid / horizon
    if kind == "power":
        level = rng.uniform(np.log(1e3), np.log(1e6))
        return np.expm1(level * u ** power_exponent)
    if kind == "logistic":
        total = np.exp(rng.uniform(np.log(1e3), np.log(1e6)))
        centre = rng.uniform(-0.1, 0.6)
        width = rng.uniform(0.02, 0.12)
        s = 1.0 / (1.0 + np.exp(-(u - centre) / width))
        s0 = 1.0 / (1.0 + np.exp(centre / width))
        return total * (s - s0) / (1.0 - s0)
    if kind == "linear":
        total = np.exp(rng.uniform(np.log(1e3), np.log(1e6)))
        return total * u
    raise ValueError(f"unknown archetype {kind!r}")


def _synthetic_visual(rng: np.random.Generator, popularity: float) -> VisualFeatures:
    hist = rng.dirichlet(np.ones(10))
    deep = rng.gamma(0.3, 1.0, size=1000) + 1e-12
    deep[int(popularity * 7) % 1000] += popularity
    length = float(rng.uniform(10, 600))
    fps = 25.0
    shots = float(rng.integers(1, 80))
    hard = float(rng.integers(0, int(shots) + 1))
    return VisualFeatures(
        video_characteristics=(length, length * fps, float(rng.integers(0, 4)), 1280.0, 720.0),
        color=tuple(hist) + (float(np.argmax(hist)),),
        face=(float(rng.uniform(0, 3)), float(rng.uniform()), float(rng.uniform(0, 0.3))),
        text=(float(rng.uniform()), float(rng.uniform(0, 0.2))),
        scene_dynamics=(shots, length / shots, hard, shots - hard),
        clutter=(float(np.clip(0.05 + 0.01 * popularity + rng.normal(0, 0.02), 0, 1)),),
        rigidity=(float(rng.uniform()),),
        thumbnail=(float(popularity + rng.normal(0, 2.0)),),
        deep=tuple(deep),
    )


def synthesize(cfg: SynthConfig, seed: int | None = None) -> Dataset:
    """Generate a deterministic synthetic dataset.

    Every record is sampled on the native resolution grid from 0 to the horizon.
    The generating archetype is kept on each record for test assertions.
    """
    seed = cfg.seed if seed is None else seed
    if cfg.n <= 0:
        raise ValueError("synth config needs n > 0")
    if cfg.resolution not in RESOLUTIONS:
        raise ValueError(f"unknown resolution {cfg.resolution!r}")
    if not cfg.archetypes:
        raise ValueError("synth config needs at least one archetype")
    names = list(cfg.archetypes)
    weights = np.array([cfg.archetypes[k] for k in names], dtype=float)
    bad = [k for k in names if k not in ARCHETYPES]
    if bad:
        raise ValueError(f"unknown archetypes {bad}; expected {ARCHETYPES}")
    if np.any(~np.isfinite(weights)) or np.any(weights < 0) or weights.sum() <= 0:
        raise ValueError("archetype weights must be non-negative with a positive sum")
    if cfg.noise < 0 or cfg.horizon_days <= 0:
        raise ValueError("noise must be >= 0 and horizon_days > 0")
    weights = weights / weights.sum()

    unit = RESOLUTIONS[cfg.resolution]
    steps = int(round(cfg.horizon / unit))
    grid = np.arange(steps + 1) * unit
    rng = np.random.default_rng(seed)
    records = []
    for i in range(cfg.n):
        kind = names[rng.choice(len(names), p=weights)]
        views = _views_curve(kind, rng, grid, cfg.horizon, cfg.power_exponent)
        inc = np.diff(views)
        if cfg.noise > 0:
            inc = inc * np.exp(cfg.noise * rng.standard_normal(inc.size))
            views = np.concatenate(([0.0], np.cumsum(inc)))
        views = np.maximum.accumulate(views)
        series = {"views": Series(grid, views)}
        if cfg.social:
            for metric, rate in zip(SOCIAL_METRICS, (0.03, 0.004, 0.008)):
                r = rate * np.exp(rng.normal(0.0, 0.5))
                si = inc * r * np.exp(0.3 * rng.standard_normal(inc.size))
                series[metric] = Series(grid, np.concatenate(([0.0], np.cumsum(si))))
        visual = _synthetic_visual(rng, float(np.log1p(views[-1]))) if cfg.visual else None
        records.append(VideoRecord(f"v{i:06d}", 1_600_000_000 + i * 60, series, visual, kind))
    return Dataset(tuple(records), cfg.resolution, cfg.name)
