"""Batch assembly from station data and the zero-shot forecasting entry point."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..data.core import TARGET, VARIABLES, Dataset, DataError, Station, normalize
from ..retrieval import RetrievalPlan, StationIndex, pairwise_haversine
from .model import Batch, Forecaster, GaussianForecast, ModelConfig, ModelError

_TCOL = VARIABLES.index(TARGET)


def location_stats(stations: Sequence[Station]) -> tuple[tuple[float, ...], tuple[float, ...]]:
    """Centre and scale used to standardise (lat, lon, elevation)."""
    arr = np.array([[s.lat, s.lon, s.elevation] for s in stations], dtype=np.float64)
    sd = arr.std(axis=0)
    sd[sd < 1e-9] = 1.0
    return tuple(arr.mean(axis=0).tolist()), tuple(sd.tolist())


def _coords(stations: Sequence[Station]) -> np.ndarray:
    return np.array([[s.lat, s.lon, s.elevation] for s in stations], dtype=np.float64).reshape(-1, 3)


class StationData:
    """Dense normalised panel with a fixed reference registry.

    The registry (training stations) is the retrieval pool; any station in
    ``ds`` can be a target. A target in the registry never retrieves itself.
    """

    def __init__(self, ds: Dataset, registry_ids: Sequence[str], norm_stats: dict[str, tuple[float, float]]):
        if not registry_ids:
            raise DataError("retrieval registry is empty")
        self.ds = ds
        self.stats = norm_stats
        panel = ds.panel()
        self.panel = panel
        self.start = panel.start
        self.z = normalize(panel.values, norm_stats)
        self.temp = panel.values[..., _TCOL]
        self.valid = panel.valid
        self.registry_ids = sorted(registry_ids)
        self.reg_rows = np.array([panel.index(i) for i in self.registry_ids])
        self.reg_pos = {sid: p for p, sid in enumerate(self.registry_ids)}
        self.reg_stations = [ds.stations[i] for i in self.registry_ids]
        self.reg_loc = _coords(self.reg_stations)
        self.reg_dist = pairwise_haversine(self.reg_stations)
        self.index = StationIndex(self.reg_stations)
        self.t_mean, self.t_std = norm_stats[TARGET]

    def ranking(self, station_id: str) -> tuple[np.ndarray, np.ndarray]:
        """Registry positions and distances of all references, nearest first."""
        ranked = self.index.ranking(self.ds.stations[station_id])
        return (np.array([self.reg_pos[s.id] for s, _ in ranked], dtype=np.int64),
                np.array([d for _, d in ranked]))

    def plan_arrays(self, station_id: str, cfg: ModelConfig) -> dict[str, tuple[np.ndarray, np.ndarray]]:
        pos, dist = self.ranking(station_id)
        out = {}
        for band, k in cfg.band_ks_map().items():
            if k > len(pos):
                raise ModelError(f"band {band} needs k={k} neighbours but only {len(pos)} references exist")
            out[band] = (pos[:k], dist[:k])
        return out

    def plan_from(self, plan: RetrievalPlan, cfg: ModelConfig) -> dict[str, tuple[np.ndarray, np.ndarray]]:
        if set(plan.bands) != set(cfg.band_ks_map()):
            raise ModelError(f"retrieval plan bands {sorted(plan.bands)} do not match model bands "
                             f"{sorted(cfg.band_ks_map())}")
        out = {}
        for band, k in cfg.band_ks_map().items():
            ids = plan.ids(band)
            if len(ids) != k:
                raise ModelError(f"plan lists {len(ids)} stations for band {band}, model expects {k}")
            try:
                out[band] = (np.array([self.reg_pos[i] for i in ids], dtype=np.int64), plan.distances(band))
            except KeyError as e:
                raise ModelError(f"retrieved station {e.args[0]} is not a reference station") from None
        return out

    def hour_offset(self, t0: int) -> int:
        return int(t0) - self.start

    def anchor_ok(self, rows: np.ndarray, t0: int, context_len: int, horizon_len: int) -> np.ndarray:
        o = self.hour_offset(t0)
        return self.panel.complete(rows, o - context_len + 1, o + horizon_len + 1)

    def context(self, rows: np.ndarray, t0: int, length: int) -> np.ndarray:
        o = self.hour_offset(t0)
        return self.z[rows, o - length + 1:o + 1]

    def truth(self, row: int, t0: int, horizon_len: int) -> np.ndarray:
        o = self.hour_offset(t0)
        return self.temp[row, o + 1:o + 1 + horizon_len]


def _pair_distances(data: StationData, idx: np.ndarray, dist: np.ndarray) -> np.ndarray:
    """Node distances ``[B, k+1, k+1]`` with the target as the last node."""
    b, k = idx.shape
    pair = np.zeros((b, k + 1, k + 1))
    pair[:, :k, :k] = data.reg_dist[idx[:, :, None], idx[:, None, :]]
    pair[:, :k, k] = dist
    pair[:, k, :k] = dist
    return pair


@dataclass
class Request:
    station_id: str
    t0: int


def assemble(data: StationData, cfg: ModelConfig, requests: Sequence[Request], target_context_len: int | None = None,
             plans: dict[str, dict[str, tuple[np.ndarray, np.ndarray]]] | None = None) -> tuple[Batch, np.ndarray]:
    """Batch and truths ``[B, L_y]`` in degrees F for (station, anchor) requests."""
    lc = cfg.context_len if target_context_len is None else target_context_len
    if lc < 0 or lc > cfg.context_len:
        raise ModelError(f"target context length {lc} outside [0, {cfg.context_len}]")
    if cfg.levels and lc % 2**cfg.levels:
        raise ModelError(f"target context length {lc} is not divisible by 2**levels = {2**cfg.levels}")
    anchors = sorted({r.t0 for r in requests})
    a_pos = {t: i for i, t in enumerate(anchors)}
    rows = np.array([data.panel.index(r.station_id) for r in requests], dtype=np.int64)
    tgt_ctx = np.stack([data.context(np.array([row]), r.t0, lc)[0] for row, r in zip(rows, requests)]) \
        if requests else np.zeros((0, lc, cfg.n_features))
    truths = np.stack([data.truth(row, r.t0, cfg.horizon_len) for row, r in zip(rows, requests)])
    locs = _coords([data.ds.stations[r.station_id] for r in requests])
    batch = Batch(tgt_ctx, locs, np.array([r.t0 for r in requests], dtype=np.int64))
    if cfg.uses_retrieval:
        batch.pool_ctx = np.stack([data.context(data.reg_rows, t, cfg.context_len) for t in anchors])
        batch.pool_loc = data.reg_loc
        batch.pool_t0 = np.array(anchors, dtype=np.int64)
        batch.anchor = np.array([a_pos[r.t0] for r in requests], dtype=np.int64)
        per = [plans[r.station_id] if plans and r.station_id in plans else data.plan_arrays(r.station_id, cfg)
               for r in requests]
        for band in cfg.band_ks_map():
            idx = np.stack([p[band][0] for p in per])
            dist = np.stack([p[band][1] for p in per])
            batch.nb_idx[band] = idx
            batch.nb_dist[band] = dist
            if cfg.transfer == "gnn":
                batch.nb_pair_dist[band] = _pair_distances(data, idx, dist)
    return batch, truths


def valid_requests(data: StationData, cfg: ModelConfig, station_ids: Sequence[str], anchors: Sequence[int]
                   ) -> list[Request]:
    """Requests whose target window and every retrieved context are complete."""
    out = []
    need = max(cfg.band_ks) if cfg.uses_retrieval else 0
    for t0 in anchors:
        for sid in station_ids:
            row = np.array([data.panel.index(sid)])
            if not data.anchor_ok(row, t0, cfg.context_len, cfg.horizon_len)[0]:
                continue
            if need:
                pos, _ = data.ranking(sid)
                refs = data.reg_rows[pos[:need]]
                if not data.anchor_ok(refs, t0, cfg.context_len, 0).all():
                    continue
            out.append(Request(sid, int(t0)))
    return out


def predict(model: Forecaster, data: StationData, batch: Batch) -> tuple[np.ndarray, np.ndarray | None]:
    """Forecast mean (and variance) in degrees F."""
    mu, var = model.forward(batch)
    m = mu.data * data.t_std + data.t_mean
    v = None if var is None else var.data * data.t_std**2
    return m, v


def forecast_zero_shot(target: Station, target_context: np.ndarray, data: StationData, plan: RetrievalPlan | None,
                       model: Forecaster, t0: int) -> np.ndarray | GaussianForecast:
    """One forecast for ``target`` at anchor ``t0``.

    ``target_context`` is the normalised ``[L, F]`` history ending at ``t0``
    (``L`` may be 0). References always contribute their full context.
    """
    cfg = model.cfg
    ctx = np.asarray(target_context, dtype=np.float64).reshape(-1, cfg.n_features)
    lc = ctx.shape[0]
    if lc > cfg.context_len or (cfg.levels and lc % 2**cfg.levels):
        raise ModelError(f"target context length {lc} incompatible with the model (L_x={cfg.context_len}, "
                         f"levels={cfg.levels})")
    batch = Batch(ctx[None], _coords([target]), np.array([t0], dtype=np.int64))
    if cfg.uses_retrieval:
        if plan is not None:
            arrays = data.plan_from(plan, cfg)
        else:
            arrays = {}
            ranked = data.index.ranking(target)
            for band, k in cfg.band_ks_map().items():
                if k > len(ranked):
                    raise ModelError(f"band {band} needs k={k} neighbours but only {len(ranked)} exist")
                arrays[band] = (np.array([data.reg_pos[s.id] for s, _ in ranked[:k]]),
                                np.array([d for _, d in ranked[:k]]))
        batch.pool_ctx = data.context(data.reg_rows, t0, cfg.context_len)[None]
        batch.pool_loc = data.reg_loc
        batch.pool_t0 = np.array([t0], dtype=np.int64)
        batch.anchor = np.zeros(1, dtype=np.int64)
        for band, (idx, dist) in arrays.items():
            batch.nb_idx[band] = idx[None]
            batch.nb_dist[band] = dist[None]
            if cfg.transfer == "gnn":
                batch.nb_pair_dist[band] = _pair_distances(data, idx[None], dist[None])
    m, v = predict(model, data, batch)
    if v is None:
        return m[0]
    return GaussianForecast(m[0], v[0])


def predict_requests(model: Forecaster, data: StationData, requests: Sequence[Request],
                     target_context_len: int | None = None, chunk: int = 64
                     ) -> tuple[np.ndarray, np.ndarray | None, np.ndarray]:
    """Means, variances (or None) and truths ``[N, L_y]`` in degrees F, in request order."""
    mus, vars_, truths = [], [], []
    for i in range(0, len(requests), chunk):
        batch, y = assemble(data, model.cfg, requests[i:i + chunk], target_context_len)
        m, v = predict(model, data, batch)
        mus.append(m)
        truths.append(y)
        if v is not None:
            vars_.append(v)
    h = model.cfg.horizon_len
    if not mus:
        return np.zeros((0, h)), None, np.zeros((0, h))
    return np.concatenate(mus), (np.concatenate(vars_) if vars_ else None), np.concatenate(truths)
