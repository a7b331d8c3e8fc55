"""Command-line entry point: ``rarf <command> [flags]``.

Every command writes its artifacts plus ``manifest.json`` (config digest,
seed, versions) into ``--out``. Failures exit nonzero with one line on
stderr: ``error: <category>: <message>``.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import platform
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, RunConfig, load_config
from .data import (
    TARGET,
    VARIABLES,
    DataError,
    Dataset,
    SplitSpec,
    compute_norm_stats,
    generate_synthetic,
    ingest_csv,
    iso_to_hours,
    read_manifest,
    random_split,
    window_anchors,
    write_manifest,
)
from .diffcore import Checkpoint, CheckpointError
from .evaluation import (
    BASELINES,
    BaselineError,
    MetricError,
    MetricReport,
    build_report,
    corr_vs_distance,
    decorrelation_distance,
    evaluate_model,
    rows_to_csv,
    run_baselines,
    sweep,
)
from .forecaster import (
    Forecaster,
    GaussianForecast,
    ModelConfig,
    ModelError,
    StationData,
    forecast_zero_shot,
    location_stats,
    valid_requests,
)
from .multires import BandSpec, DecompositionError, decompose
from .retrieval import RetrievalConfig, RetrievalError, StationIndex
from .training import TrainingError, train_phase1, train_phase2

CATEGORIES = (
    (ConfigError, "config"),
    (CheckpointError, "checkpoint"),
    (DataError, "data"),
    (DecompositionError, "decompose"),
    (RetrievalError, "retrieval"),
    (ModelError, "model"),
    (TrainingError, "training"),
    (BaselineError, "baseline"),
    (MetricError, "metric"),
    (OSError, "io"),
)


class UsageError(Exception):
    pass


# -- shared plumbing ---------------------------------------------------------
def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n")


def _manifest(out: Path, command: str, cfg: RunConfig | None, seed: int | None, inputs: dict | None = None) -> None:
    _write_json(out / "manifest.json", {
        "command": command,
        "config_digest": cfg.digest() if cfg else None,
        "config": cfg.to_json() if cfg else None,
        "seed": seed,
        "inputs": inputs or {},
        "versions": {"artifact": __version__, "python": platform.python_version(), "numpy": np.__version__},
    })


def _out_dir(args) -> Path:
    if not args.out:
        raise UsageError("--out is required")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _config(args) -> RunConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else RunConfig()
    if getattr(args, "seed", None) is not None:
        cfg = cfg.with_seed(args.seed)
    ks = getattr(args, "band_ks", None)
    if ks:
        try:
            vals = tuple(int(v) for v in ks.split(","))
        except ValueError:
            raise UsageError(f"--band-ks expects comma separated integers, got {ks!r}") from None
        model = replace(cfg.model, band_ks=vals)
        retrieval = cfg.retrieval
        if len(vals) == 3:
            retrieval = RetrievalConfig(*vals, distance=cfg.retrieval.distance)
        cfg = replace(cfg, model=model, retrieval=retrieval)
    return cfg


def _dataset(cfg: RunConfig) -> Dataset:
    src = cfg.data
    if src.source == "synthetic":
        return generate_synthetic(cfg.synth)
    if src.source == "manifest":
        return read_manifest(src.path)
    return ingest_csv(src.path)


def _split(cfg: RunConfig, ds: Dataset, ckpt: Checkpoint | None = None) -> SplitSpec:
    if ckpt is not None and "split" in ckpt.config:
        s = ckpt.config["split"]
        return SplitSpec(list(s["train"]), list(s["val"]), list(s["test"]), tuple(s["fractions"]))
    return random_split(ds, cfg.split.n_val, cfg.split.n_test, cfg.seed, cfg.split.fractions)


def _norm(ds: Dataset, split: SplitSpec, ckpt: Checkpoint | None = None) -> dict:
    if ckpt is not None and ckpt.norm_stats:
        return dict(ckpt.norm_stats)
    return ds.norm_stats or compute_norm_stats(ds, split)


def _load_checkpoint(args) -> tuple[Checkpoint, str]:
    if not args.checkpoint:
        raise UsageError("--checkpoint is required")
    raw = Path(args.checkpoint).read_bytes()
    return Checkpoint.from_bytes(raw), hashlib.sha256(raw).hexdigest()


def _test_requests(cfg: RunConfig, mcfg: ModelConfig, data: StationData, ds: Dataset, split: SplitSpec,
                   station_ids=None):
    lo, hi = split.periods(ds)["test"]
    times = np.arange(data.start, data.start + data.panel.n_hours, dtype=np.int64)
    anchors = window_anchors(times, mcfg.context_len, mcfg.horizon_len, cfg.run.eval_stride, (lo, hi))
    return valid_requests(data, mcfg, station_ids or split.test_station_ids, anchors)


def _train_series(data: StationData, ds: Dataset, split: SplitSpec, ids) -> dict[str, np.ndarray]:
    """Each station's temperature over the train period (for MASE), complete hours only."""
    lo, hi = split.periods(ds)["train"]
    a, b = lo - data.start, hi - data.start
    out = {}
    for sid in ids:
        r = data.panel.index(sid)
        ok = data.valid[r, a:b]
        out[sid] = data.temp[r, a:b][ok]
    return out


def _write_report(out: Path, name: str, rep: MetricReport) -> None:
    (out / f"{name}.json").write_text(rep.dumps())
    (out / f"{name}_per_hour.csv").write_text(rep.per_hour_csv())
    (out / f"{name}_per_station.csv").write_text(rep.per_station_csv())


def _context_hours(args, mcfg: ModelConfig) -> int:
    lc = mcfg.context_len if args.context_hours is None else args.context_hours
    if lc < 0 or lc > mcfg.context_len or (mcfg.levels and lc % 2**mcfg.levels):
        raise UsageError(f"--context-hours {lc} must be a multiple of {2**mcfg.levels} in [0, {mcfg.context_len}]")
    return lc


# -- commands ----------------------------------------------------------------
def cmd_gen_synth(args) -> dict:
    cfg = _config(args)
    out = _out_dir(args)
    ds = generate_synthetic(cfg.synth)
    path = write_manifest(ds, out / "data")
    _manifest(out, "gen-synth", cfg, cfg.seed)
    return {"manifest": str(path), "stations": len(ds.stations), "hours": cfg.synth.n_hours}


def cmd_ingest(args) -> dict:
    if not args.input:
        raise UsageError("--input is required")
    out = _out_dir(args)
    ds = ingest_csv(args.input)
    path = write_manifest(ds, out / "data")
    _manifest(out, "ingest", None, None, {"input": str(args.input)})
    return {"manifest": str(path), "stations": len(ds.stations), "dropped_rows": ds.dropped_rows}


def cmd_train(args) -> dict:
    cfg = _config(args)
    out = _out_dir(args)
    ds = _dataset(cfg)
    split = _split(cfg, ds)
    data = StationData(ds, split.train_station_ids, _norm(ds, split))
    center, scale = location_stats(data.reg_stations)
    mcfg = replace(cfg.model, loc_center=center, loc_scale=scale)
    res = train_phase1(ds, split, mcfg, cfg.train, data)
    digest = res.checkpoint.save(out / "checkpoint.rarf")
    res.write_log(out / "train_log.json")
    _manifest(out, "train", cfg, cfg.seed)
    return {"checkpoint": str(out / "checkpoint.rarf"), "sha256": digest, "best_epoch": res.log["best_epoch"],
            "best_val": res.log["best_val"]}


def cmd_adapt(args) -> dict:
    cfg = _config(args)
    out = _out_dir(args)
    if not args.target:
        raise UsageError("--target is required")
    ckpt, src = _load_checkpoint(args)
    ds = _dataset(cfg)
    split = _split(cfg, ds, ckpt)
    if args.target not in split.train_station_ids:
        raise UsageError(f"--target {args.target} is not a train station; adaptation runs on train stations")
    data = StationData(ds, split.train_station_ids, _norm(ds, split, ckpt))
    res = train_phase2(ckpt, args.target, ds, split, cfg.train, data)
    digest = res.checkpoint.save(out / "checkpoint.rarf")
    res.write_log(out / "adapt_log.json")
    _manifest(out, "adapt", cfg, cfg.seed, {"checkpoint_sha256": src, "target": args.target})
    return {"checkpoint": str(out / "checkpoint.rarf"), "sha256": digest, "best_epoch": res.log["best_epoch"]}


def cmd_forecast(args) -> dict:
    cfg = _config(args)
    out = _out_dir(args)
    if not args.target:
        raise UsageError("--target is required")
    ckpt, src = _load_checkpoint(args)
    model = Forecaster.from_checkpoint(ckpt)
    mcfg = model.cfg
    ds = _dataset(cfg)
    if args.target not in ds.stations:
        raise UsageError(f"unknown station {args.target}")
    split = _split(cfg, ds, ckpt)
    data = StationData(ds, split.train_station_ids, _norm(ds, split, ckpt))
    lc = _context_hours(args, mcfg)
    row = np.array([data.panel.index(args.target)])
    if args.t0:
        t0 = iso_to_hours(args.t0)
    else:
        # latest anchor whose target context (and reference contexts) fit in the record
        first = data.start + mcfg.context_len - 1
        t0 = next((t for t in range(data.start + data.panel.n_hours - 1, first - 1, -1)
                   if data.anchor_ok(row, t, lc, 0)[0]), None)
        if t0 is None:
            raise DataError(f"station {args.target} has no complete {lc}-hour context")
    o = data.hour_offset(t0)
    if o - mcfg.context_len + 1 < 0 or o >= data.panel.n_hours:
        raise DataError(f"anchor {args.t0} is outside the record")
    if not data.anchor_ok(row, t0, lc, 0)[0]:
        raise DataError(f"station {args.target} context ending at t0 is incomplete")
    ctx = data.context(row, t0, lc)[0]
    target = ds.stations[args.target]
    f = forecast_zero_shot(target, ctx, data, None, model, t0)
    hours = [int(t0 + h + 1) for h in range(mcfg.horizon_len)]
    result = {"target": args.target, "t0": int(t0), "context_hours": lc, "hours": hours}
    if isinstance(f, GaussianForecast):
        result["mean_f"] = f.mu.tolist()
        result["sigma_f"] = f.sigma.tolist()
    else:
        result["mean_f"] = np.asarray(f).tolist()
    _write_json(out / "forecast.json", result)
    _manifest(out, "forecast", cfg, cfg.seed, {"checkpoint_sha256": src, "target": args.target})
    return {"forecast": str(out / "forecast.json"), "t0": int(t0)}


def cmd_evaluate(args) -> dict:
    cfg = _config(args)
    out = _out_dir(args)
    ckpt, src = _load_checkpoint(args)
    model = Forecaster.from_checkpoint(ckpt)
    ds = _dataset(cfg)
    split = _split(cfg, ds, ckpt)
    data = StationData(ds, split.train_station_ids, _norm(ds, split, ckpt))
    lc = _context_hours(args, model.cfg)
    reqs = _test_requests(cfg, model.cfg, data, ds, split)
    if not reqs:
        raise DataError("no complete test windows")
    series = _train_series(data, ds, split, split.test_station_ids)
    rep = evaluate_model(model, data, reqs, lc, args.horizon, series, {"checkpoint_sha256": src})
    _write_report(out, "report", rep)
    _manifest(out, "evaluate", cfg, cfg.seed, {"checkpoint_sha256": src})
    return {"report": str(out / "report.json"), "mse": rep.average["mse"], "windows": rep.n_windows}


def cmd_retrieve(args) -> dict:
    cfg = _config(args)
    out = _out_dir(args)
    if not args.target:
        raise UsageError("--target is required")
    ds = _dataset(cfg)
    if args.target not in ds.stations:
        raise UsageError(f"unknown station {args.target}")
    split = _split(cfg, ds)
    registry = [ds.stations[i] for i in split.train_station_ids if i != args.target]
    plan = StationIndex(registry).plan(ds.stations[args.target], cfg.retrieval)
    (out / "plan.json").write_text(plan.dumps() + "\n")
    _manifest(out, "retrieve", cfg, cfg.seed, {"target": args.target})
    return {"plan": str(out / "plan.json"), "sizes": plan.sizes()}


def _read_signal(path) -> np.ndarray:
    vals = []
    with open(path, newline="") as fh:
        for i, row in enumerate(csv.reader(fh), 1):
            if not row or not row[-1].strip():
                continue
            try:
                vals.append(float(row[-1]))
            except ValueError:
                if i == 1:
                    continue  # header
                raise DataError(f"line {i}: not a number: {row[-1]!r}") from None
    if not vals:
        raise DataError(f"{path}: no values")
    return np.array(vals)


def cmd_decompose(args) -> dict:
    if not args.input:
        raise UsageError("--input is required")
    out = _out_dir(args)
    spec = BandSpec(args.levels if args.levels is not None else 3, args.wavelet)
    x = _read_signal(args.input)
    bs = decompose(x, spec)
    bands = {name: {k: bs.coeffs[k].tolist() for k in keys} for name, keys in spec.bands().items()}
    _write_json(out / "bands.json", {"levels": spec.levels, "wavelet": spec.wavelet, "length": int(len(x)),
                                     "coefficients": bs.to_json(), "bands": bands})
    _manifest(out, "decompose", None, None, {"input": str(args.input), "levels": spec.levels})
    return {"bands": str(out / "bands.json")}


def cmd_corr_dist(args) -> dict:
    cfg = _config(args)
    out = _out_dir(args)
    ds = _dataset(cfg)
    rows = corr_vs_distance(ds, cfg.bands, args.pairs, cfg.seed)
    (out / "corr_distance.csv").write_text(rows_to_csv(rows))
    crossing = {b: decorrelation_distance(rows, b) for b in cfg.bands.band_names()}
    summary = {"pairs": len({(r["a"], r["b"]) for r in rows}),
               "max_distance_km": max((r["distance_km"] for r in rows), default=0.0),
               "decorrelation_km": {b: (v if np.isfinite(v) else None) for b, v in crossing.items()}}
    _write_json(out / "corr_summary.json", summary)
    _manifest(out, "corr-dist", cfg, cfg.seed)
    return summary


def cmd_baseline(args) -> dict:
    cfg = _config(args)
    out = _out_dir(args)
    ds = _dataset(cfg)
    split = _split(cfg, ds)
    data = StationData(ds, split.train_station_ids, _norm(ds, split))
    mcfg = replace(cfg.model, levels=0, transfer="none", band_ks=(1,))
    if args.horizon is not None:
        mcfg = replace(mcfg, horizon_len=args.horizon)
    reqs = _test_requests(cfg, mcfg, data, ds, split)
    if not reqs:
        raise DataError("no complete test windows")
    series = _train_series(data, ds, split, split.test_station_ids)
    col = VARIABLES.index(TARGET)
    truths = np.stack([data.truth(data.panel.index(r.station_id), r.t0, mcfg.horizon_len) for r in reqs])
    ctxs = [data.context(np.array([data.panel.index(r.station_id)]), r.t0, mcfg.context_len)[0][:, col]
            * data.t_std + data.t_mean for r in reqs]
    averages, notices = {}, []
    for name in BASELINES:
        try:
            preds = np.stack([run_baselines(c, mcfg.horizon_len, (name,))[name] for c in ctxs])
        except BaselineError as exc:
            # a context too short for one baseline should not block the others
            notices.append(f"{name} skipped: {exc}")
            continue
        rep = build_report([r.station_id for r in reqs], preds, truths, None, series, {"baseline": name})
        _write_report(out, f"baseline_{name}", rep)
        averages[name] = rep.average["mse"]
    _manifest(out, "baseline", cfg, cfg.seed)
    if not averages:
        raise BaselineError("; ".join(notices))
    return {"mse": averages, "windows": len(reqs), "notices": notices}


def cmd_sweep(args) -> dict:
    cfg = _config(args)
    out = _out_dir(args)
    if not args.values:
        raise UsageError("--values is required")
    try:
        values = [int(v) for v in args.values.split(",")]
    except ValueError:
        raise UsageError(f"--values expects comma separated integers, got {args.values!r}") from None
    ckpt, src = _load_checkpoint(args)
    model = Forecaster.from_checkpoint(ckpt)
    ds = _dataset(cfg)
    split = _split(cfg, ds, ckpt)
    data = StationData(ds, split.train_station_ids, _norm(ds, split, ckpt))
    reqs = _test_requests(cfg, model.cfg, data, ds, split)
    if not reqs:
        raise DataError("no complete test windows")
    series = _train_series(data, ds, split, split.test_station_ids)
    reports, notices = sweep(model, data, reqs, args.axis, values, series)
    for v, rep in reports.items():
        _write_report(out, f"sweep_{args.axis}_{v}", rep)
    summary = {"axis": args.axis, "mse": {str(v): r.average["mse"] for v, r in reports.items()}, "notices": notices}
    _write_json(out / "sweep_summary.json", summary)
    for n in notices:
        print(f"notice: {n}", file=sys.stderr)
    _manifest(out, "sweep", cfg, cfg.seed, {"checkpoint_sha256": src})
    return summary


COMMANDS = {
    "gen-synth": cmd_gen_synth, "ingest": cmd_ingest, "train": cmd_train, "adapt": cmd_adapt,
    "forecast": cmd_forecast, "evaluate": cmd_evaluate, "retrieve": cmd_retrieve, "decompose": cmd_decompose,
    "corr-dist": cmd_corr_dist, "baseline": cmd_baseline, "sweep": cmd_sweep,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="rarf", description="Retrieval-augmented multi-resolution station forecasting.")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config")
        s.add_argument("--out")
        s.add_argument("--checkpoint")
        s.add_argument("--seed", type=int)
        s.add_argument("--target")
        s.add_argument("--levels", type=int)
        s.add_argument("--horizon", type=int)
        s.add_argument("--context-hours", type=int)
        s.add_argument("--band-ks")
        if name in ("decompose", "ingest"):
            s.add_argument("--input")
        if name == "decompose":
            s.add_argument("--wavelet", default="haar")
        if name == "forecast":
            s.add_argument("--t0", help="anchor hour (ISO 8601, UTC); default: latest complete context")
        if name == "corr-dist":
            s.add_argument("--pairs", type=int, default=200)
        if name == "sweep":
            s.add_argument("--axis", choices=("horizon", "context_len"), default="context_len")
            s.add_argument("--values")
    return p


def _category(exc: Exception) -> str:
    for cls, name in CATEGORIES:
        if isinstance(exc, cls):
            return name
    return "internal"


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if not args.command:
            raise UsageError("a command is required: " + " | ".join(COMMANDS))
        result = COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"error: usage: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - every failure maps to one line
        msg = " ".join(str(exc).split()) or type(exc).__name__
        print(f"error: {_category(exc)}: {msg}", file=sys.stderr)
        return 2 if isinstance(exc, ConfigError) else 1
    print(json.dumps(result, sort_keys=True, default=float))
    return 0


if __name__ == "__main__":
    sys.exit(main())
