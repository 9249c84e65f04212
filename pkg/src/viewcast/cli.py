"""Command-line entry point: ``viewcast {evaluate,sweep,bench,gridsearch,synth}``.

Every command reads one flat ``key = value`` config file. Exit codes: 0 success,
2 config error, 3 data error, 4 experiment failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, parse_kv, read_kv, split_list
from .dataset import (SCHEMAS, DataError, Dataset, SynthConfig, load_dataset, load_visual_features,
                      preprocess, save_dataset, save_visual_features, synthesize)
from .evaluation import (ExperimentError, Method, bench_runtime, bench_summary, cross_validate_matrix,
                         fold_averaged_pvalue, kfold_split, sweep_tr)
from .features import FeatureSpec, assemble, format_duration, parse_duration, parse_groups
from .models import KINDS, config_to_dict, grid_search_matrix, make_config

log = logging.getLogger("viewcast")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_EXPERIMENT = 0, 2, 3, 4

_FEATURE_KEYS = ("t_r", "t_t", "interval", "groups", "log_transform", "visual_groups")


@dataclass
class ExperimentConfig:
    dataset: Path
    schema: str
    seed: int
    spec: FeatureSpec
    feature_sets: list[tuple[str, ...]]
    methods: list[Method]
    folds: int = 10
    out: Path = Path("results")
    threads: int = 1
    resolution: str | None = None
    visual: Path | None = None
    min_horizon: float | None = None
    raw: dict = field(default_factory=dict)

    @classmethod
    def from_mapping(cls, kv: dict[str, str]) -> "ExperimentConfig":
        try:
            return cls._from_mapping(kv)
        except ConfigError:
            raise
        except (ValueError, KeyError, TypeError) as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def _from_mapping(cls, kv):
        if "dataset" not in kv:
            raise ConfigError("config key 'dataset' is required")
        dataset = Path(kv["dataset"])
        if not dataset.exists():
            raise ConfigError(f"dataset file not found: {dataset}")
        schema = kv.get("schema", "youtube")
        if schema not in SCHEMAS:
            raise ConfigError(f"unknown schema {schema!r}; expected one of {sorted(SCHEMAS)}")
        if kv.get("seed", "") == "":
            raise ConfigError("config key 'seed' is required (or pass --seed)")
        visual = Path(kv["visual"]) if kv.get("visual") else None
        if visual is not None and not visual.exists():
            raise ConfigError(f"visual features file not found: {visual}")
        spec = FeatureSpec.from_mapping({k: kv[k] for k in _FEATURE_KEYS if k in kv})
        sets = [parse_groups(s) for s in kv.get("feature_sets", "").split(";") if s.strip()]
        sets = [spec.replace(groups=s).groups for s in sets] or [spec.groups]
        methods = []
        for name in split_list(kv.get("methods", ",".join(KINDS))):
            kind = name.upper()
            if kind not in KINDS:
                raise ConfigError(f"unknown method {name!r}; expected one of {KINDS}")
            prefix = kind.lower() + "."
            params = {k[len(prefix):]: v for k, v in kv.items() if k.startswith(prefix)}
            methods.append(Method(kind, kind, make_config(kind, params)))
        if not methods:
            raise ConfigError("no methods configured")
        return cls(
            dataset=dataset, schema=schema, seed=int(kv["seed"]), spec=spec, feature_sets=sets,
            methods=methods, folds=int(kv.get("folds", 10)), out=Path(kv.get("out", "results")),
            threads=int(kv.get("threads", 1)), resolution=kv.get("resolution") or None, visual=visual,
            min_horizon=parse_duration(kv["min_horizon"]) if kv.get("min_horizon") else None, raw=dict(kv))

    def load(self) -> Dataset:
        d = load_dataset(self.dataset, self.schema, self.resolution)
        if self.visual is not None:
            d = d.with_visual(load_visual_features(self.visual))
        horizon = self.min_horizon or self.spec.t_t
        kept = preprocess(d, horizon)
        log.info("dataset %s: %d records, %d after preprocessing", d.name, len(d), len(kept))
        if len(kept) < self.folds:
            raise DataError(f"only {len(kept)} usable records after preprocessing; need at least {self.folds}")
        return kept


# ----------------------------------------------------------------------------
# output helpers


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f".{path.name}.tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def write_csv(path: Path, rows: list[dict], columns: list[str]) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r[c]) for c in columns])
    write_atomic(path, buf.getvalue())


def write_json(path: Path, obj) -> None:
    write_atomic(path, json.dumps(obj, indent=2, sort_keys=False, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, Path):
        return str(o)
    raise TypeError(type(o).__name__)


# ----------------------------------------------------------------------------
# commands


def cmd_evaluate(cfg: ExperimentConfig) -> int:
    d = cfg.load()
    folds = kfold_split(len(d), cfg.folds, cfg.seed)
    score_rows, fold_rows, summary_sets = [], [], []
    for groups in cfg.feature_sets:
        spec = cfg.spec.replace(groups=groups)
        fm = assemble(d, spec)
        label = "+".join(spec.groups)
        reports = {}
        for m in cfg.methods:
            log.info("evaluating %s on %s", m.name, label)
            rep = cross_validate_matrix(m.kind, m.config, fm, folds, cfg.threads, m.name)
            reports[m.name] = rep
            score_rows.append({"features": label, "method": m.name, "mean": rep.mean, "ci95": rep.ci95,
                               "ci95_normal": rep.ci95_normal})
            for f, s in enumerate(rep.per_fold_scores):
                fold_rows.append({"features": label, "method": m.name, "t_r": spec.t_r / d.unit, "fold": f,
                                  "score": s, "fit_ms": rep.fit_ms[f], "predict_ms": rep.predict_ms[f]})
        pvalues = {}
        if "PSVR" in reports:
            for name, rep in reports.items():
                if name != "PSVR":
                    try:
                        pvalues[name] = fold_averaged_pvalue(reports["PSVR"], rep)
                    except ValueError as exc:
                        log.warning("t-test PSVR vs %s skipped: %s", name, exc)
        summary_sets.append({"features": label, "methods": [r.summary() for r in reports.values()],
                             "pvalue_vs_psvr": pvalues})
    out = cfg.out
    write_csv(out / "scores.csv", score_rows, ["features", "method", "mean", "ci95", "ci95_normal"])
    write_csv(out / "folds.csv", fold_rows,
              ["features", "method", "t_r", "fold", "score", "fit_ms", "predict_ms"])
    write_json(out / "summary.json", {
        "viewcast_version": __version__,
        "dataset": str(cfg.dataset), "n_records": len(d), "resolution": d.resolution,
        "t_r": format_duration(cfg.spec.t_r), "t_t": format_duration(cfg.spec.t_t),
        "folds": cfg.folds, "seed": cfg.seed, "results": summary_sets,
    })
    print(f"wrote {out / 'scores.csv'} and {out / 'summary.json'}")
    return EXIT_OK


def _duration_list(text: str, unit: float) -> list[float]:
    """``"1d,2d,6d"`` or a range ``"1d:29d"`` stepping by `unit`; bare numbers are native units."""
    def one(s):
        s = s.strip()
        return float(s) * unit if s.replace(".", "", 1).isdigit() else parse_duration(s)
    text = str(text).strip()
    if ":" in text:
        a, b = text.split(":", 1)
        lo, hi = one(a), one(b)
        n = int(round((hi - lo) / unit))
        return [lo + i * unit for i in range(n + 1)]
    return [one(s) for s in split_list(text)]


def cmd_sweep(cfg: ExperimentConfig) -> int:
    d = cfg.load()
    if "sweep.t_r" in cfg.raw:
        t_rs = _duration_list(cfg.raw["sweep.t_r"], d.unit)
    else:
        n = int(round(cfg.spec.t_t / d.unit))
        t_rs = [i * d.unit for i in range(1, n)]
    folds = kfold_split(len(d), cfg.folds, cfg.seed)
    res = sweep_tr(cfg.methods, d, t_rs, cfg.spec.t_t, folds, cfg.spec, cfg.threads)
    rows = [dict(r, t_r=r["t_r"] / d.unit) for r in res.rows]
    summary = [dict(r, t_r=r["t_r"] / d.unit) for r in res.summary()]
    write_csv(cfg.out / "sweep.csv", rows, ["method", "t_r", "fold", "score"])
    write_csv(cfg.out / "sweep_timings.csv", rows, ["method", "t_r", "fold", "fit_ms", "predict_ms"])
    write_csv(cfg.out / "sweep_summary.csv", summary, ["method", "t_r", "mean", "ci95"])
    print(f"wrote {cfg.out / 'sweep.csv'}")
    return EXIT_OK


def cmd_bench(cfg: ExperimentConfig) -> int:
    d = cfg.load()
    sizes = [int(s) for s in split_list(cfg.raw.get("bench.sizes", "500,1000,2000"))]
    repeats = int(cfg.raw.get("bench.repeats", 3))
    probe = int(cfg.raw.get("bench.probe", 1000))
    try:
        rows = bench_runtime(cfg.methods, d, cfg.spec, sizes, repeats, cfg.seed, probe)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    cols = ["method", "subset_size", "repeat", "fit_ms", "predict_ms"]
    write_csv(cfg.out / "bench.csv", rows, cols)
    write_csv(cfg.out / "bench_summary.csv", bench_summary(rows), ["method", "subset_size", "fit_ms", "predict_ms"])
    print(f"wrote {cfg.out / 'bench.csv'}")
    return EXIT_OK


def cmd_gridsearch(cfg: ExperimentConfig) -> int:
    kind = cfg.raw.get("grid.method", "PSVR").upper()
    if kind not in KINDS:
        raise ConfigError(f"unknown grid.method {kind!r}")
    grid = {k[len("grid."):]: split_list(v) for k, v in cfg.raw.items()
            if k.startswith("grid.") and k != "grid.method"}
    base = next((m.config for m in cfg.methods if m.kind == kind), None)
    try:
        for params in [dict(zip(grid, vals)) for vals in zip(*grid.values())][:1]:
            make_config(kind, params, base)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    d = cfg.load()
    fm = assemble(d, cfg.spec)
    res = grid_search_matrix(kind, grid, fm, kfold_split(len(fm), cfg.folds, cfg.seed), base, cfg.threads)
    keys = list(grid)
    rows = [dict({k: r["params"][k] for k in keys}, mean="" if r["mean"] is None else r["mean"],
                 ci95="" if r["ci95"] is None else r["ci95"], status=r["status"], error=r["error"])
            for r in res.table]
    write_csv(cfg.out / "grid.csv", rows, keys + ["mean", "ci95", "status", "error"])
    write_json(cfg.out / "best.json", {"method": kind, "params": res.best_params, "mean": res.best_score,
                                       "config": config_to_dict(res.best_config), "seed": cfg.seed})
    print(f"best {kind} {res.best_params}: {res.best_score:.4f}")
    return EXIT_OK


def cmd_synth(kv: dict[str, str], out: Path) -> int:
    kv = dict(kv)
    output = Path(kv.pop("output")) if "output" in kv else None
    visual_output = Path(kv.pop("visual_output")) if "visual_output" in kv else None
    kv.pop("out", None)
    try:
        sc = SynthConfig.from_mapping(kv)
        d = synthesize(sc)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    output = output or out / f"{sc.name}.csv"
    save_dataset(d, output)
    print(f"wrote {len(d)} records to {output}")
    if sc.visual:
        visual_output = visual_output or output.with_name(output.stem + "_visual.csv")
        save_visual_features({r.id: r.visual for r in d.records}, visual_output)
        print(f"wrote visual features to {visual_output}")
    return EXIT_OK


# ----------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="key = value experiment config file")
    common.add_argument("--out", help="output directory (overrides config 'out')")
    common.add_argument("--seed", type=int, help="random seed (overrides config 'seed')")
    common.add_argument("--threads", type=int,
                        help="worker threads for folds (default: $VIEWCAST_THREADS or 1)")
    common.add_argument("--log-level", default="WARNING",
                        choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config key; repeatable")

    p = argparse.ArgumentParser(prog="viewcast", description="Predict online video view counts and "
                                "compare UL, ML, MRBF and Popularity-SVR regressors.")
    p.add_argument("--version", action="version", version=f"viewcast {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    helps = {
        "evaluate": "cross-validate every method on every feature set; writes scores.csv, summary.json",
        "sweep": "cross-validate across reference times; writes sweep.csv",
        "bench": "time fit/predict on nested training subsets; writes bench.csv",
        "gridsearch": "score a hyperparameter grid by CV; writes best.json and grid.csv",
        "synth": "generate a synthetic dataset CSV",
    }
    for name, text in helps.items():
        sub.add_parser(name, parents=[common], help=text, description=text)
    return p


def _merged_config(args) -> dict[str, str]:
    kv = read_kv(args.config)
    for item in args.set:
        kv.update(parse_kv(item, "--set"))
    if args.seed is not None:
        kv["seed"] = str(args.seed)
    if args.out:
        kv["out"] = args.out
    threads = args.threads
    if threads is None and os.environ.get("VIEWCAST_THREADS"):
        try:
            threads = int(os.environ["VIEWCAST_THREADS"])
        except ValueError:
            raise ConfigError("VIEWCAST_THREADS must be an integer") from None
    if threads is not None:
        if threads < 1:
            raise ConfigError("--threads must be >= 1")
        kv["threads"] = str(threads)
    return kv


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=getattr(logging, args.log_level), format="%(levelname)s %(name)s: %(message)s")
    try:
        kv = _merged_config(args)
        if args.command == "synth":
            return cmd_synth(kv, Path(kv.get("out", ".")))
        cfg = ExperimentConfig.from_mapping(kv)
        return {"evaluate": cmd_evaluate, "sweep": cmd_sweep, "bench": cmd_bench,
                "gridsearch": cmd_gridsearch}[args.command](cfg)
    except ConfigError as exc:
        print(f"viewcast: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"viewcast: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ExperimentError, ValueError, ArithmeticError, np.linalg.LinAlgError, RuntimeError) as exc:
        msg = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        print(f"viewcast: experiment failed: {msg}", file=sys.stderr)
        return EXIT_EXPERIMENT


if __name__ == "__main__":
    sys.exit(main())
