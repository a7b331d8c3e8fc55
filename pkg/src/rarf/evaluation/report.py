"""Per-station metric reports and truncation sweeps over a fixed checkpoint."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..forecaster import Forecaster, Request, StationData, predict_requests
from .metrics import Z975, coverage, crps_gaussian, mase, metrics_point

POINT_KEYS = ("mse", "mae", "mape", "smape", "mase")
PROB_KEYS = ("nll", "crps", "coverage")


@dataclass
class MetricReport:
    """Per-station scores, their station average and per-horizon-hour curves."""

    per_station: dict[str, dict[str, float]]
    average: dict[str, float]
    per_hour: dict[str, list[float]]
    n_windows: int
    excluded: int = 0
    meta: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"meta": self.meta, "n_windows": self.n_windows, "excluded_mape_points": self.excluded,
                "average": self.average, "per_station": self.per_station, "per_hour": self.per_hour}

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True, allow_nan=False) + "\n"

    def per_hour_csv(self) -> str:
        keys = sorted(self.per_hour)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["hour"] + keys)
        n = len(self.per_hour[keys[0]]) if keys else 0
        for h in range(n):
            w.writerow([h + 1] + [f"{self.per_hour[k][h]:.9g}" for k in keys])
        return buf.getvalue()

    def per_station_csv(self) -> str:
        keys = sorted({k for v in self.per_station.values() for k in v})
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["station"] + keys)
        for sid in sorted(self.per_station):
            w.writerow([sid] + [f"{self.per_station[sid][k]:.9g}" for k in keys])
        return buf.getvalue()


def build_report(station_ids: Sequence[str], mu: np.ndarray, truths: np.ndarray, var: np.ndarray | None = None,
                 train_series: dict[str, np.ndarray] | None = None, meta: dict | None = None) -> MetricReport:
    """Score ``[N, H]`` forecasts; row ``i`` belongs to ``station_ids[i]``.

    Stations whose MAPE is undefined (every truth inside the guard) are left
    out of the MAPE/sMAPE averages.
    """
    sids = np.asarray(station_ids)
    if len(sids) == 0 or mu.shape != truths.shape or len(sids) != mu.shape[0]:
        raise ValueError("forecasts, truths and station ids must be aligned and nonempty")
    per_station: dict[str, dict[str, float]] = {}
    curves: dict[str, list[np.ndarray]] = {}
    excluded = 0
    for sid in sorted(set(sids.tolist())):
        m = sids == sid
        p, t = mu[m], truths[m]
        s = metrics_point(p, t)
        excluded += s.pop("excluded")
        if train_series is not None and sid in train_series:
            s["mase"] = mase(p, t, train_series[sid])
        e = p - t
        curves.setdefault("mse", []).append(np.mean(e * e, axis=0))
        curves.setdefault("mae", []).append(np.mean(np.abs(e), axis=0))
        if var is not None:
            v = var[m]
            sd = np.sqrt(v)
            s["nll"] = float(np.mean(0.5 * np.sum(np.log(v) + e * e / v, axis=1)))
            s["crps"] = float(np.mean(crps_gaussian(p, sd, t)))
            s["coverage"] = float(coverage(p, sd, t, Z975))
            curves.setdefault("crps", []).append(np.mean(crps_gaussian(p, sd, t), axis=0))
        per_station[sid] = s
    keys = sorted({k for v in per_station.values() for k in v})
    average = {}
    for k in keys:
        vals = np.array([v[k] for v in per_station.values() if k in v and np.isfinite(v[k])])
        if len(vals):
            average[k] = float(vals.mean())
    per_hour = {k: np.mean(c, axis=0).tolist() for k, c in curves.items()}
    return MetricReport(per_station, average, per_hour, int(mu.shape[0]), excluded, dict(meta or {}))


def evaluate_model(model: Forecaster, data: StationData, requests: Sequence[Request],
                   target_context_len: int | None = None, horizon: int | None = None,
                   train_series: dict[str, np.ndarray] | None = None, meta: dict | None = None) -> MetricReport:
    """Score a checkpoint on fixed requests, optionally reading only the first ``horizon`` hours."""
    cfg = model.cfg
    lc = cfg.context_len if target_context_len is None else target_context_len
    h = cfg.horizon_len if horizon is None else horizon
    if not 0 < h <= cfg.horizon_len:
        raise ValueError(f"horizon {h} outside [1, {cfg.horizon_len}]")
    mu, var, y = predict_requests(model, data, requests, lc)
    info = {"context_len": lc, "horizon": h, **(meta or {})}
    return build_report([r.station_id for r in requests], mu[:, :h], y[:, :h],
                        None if var is None else var[:, :h], train_series, info)


SWEEP_AXES = ("horizon", "context_len")


def sweep(model: Forecaster, data: StationData, requests: Sequence[Request], axis: str, values: Sequence[int],
          train_series: dict[str, np.ndarray] | None = None) -> tuple[dict[int, MetricReport], list[str]]:
    """Re-evaluate one checkpoint per value; invalid values are skipped with a notice.

    Retrieved stations always keep their full context.
    """
    if axis not in SWEEP_AXES:
        raise ValueError(f"unknown sweep axis {axis!r}; expected one of {SWEEP_AXES}")
    cfg = model.cfg
    step = 2**cfg.levels
    reports, notices = {}, []
    for v in values:
        v = int(v)
        if axis == "horizon":
            if not 0 < v <= cfg.horizon_len:
                notices.append(f"horizon {v} skipped: outside [1, {cfg.horizon_len}]")
                continue
            reports[v] = evaluate_model(model, data, requests, horizon=v, train_series=train_series)
        else:
            if not 0 <= v <= cfg.context_len or v % step:
                notices.append(f"context_len {v} skipped: needs a multiple of {step} in [0, {cfg.context_len}]")
                continue
            reports[v] = evaluate_model(model, data, requests, target_context_len=v, train_series=train_series)
    return reports, notices
