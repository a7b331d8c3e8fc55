"""Losses and the two-phase training procedure."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Sequence

import numpy as np

from .data.core import Dataset, DataError, SplitSpec, compute_norm_stats, window_anchors
from .diffcore import Adam, Checkpoint, SplitMix64, Tensor, derive_seed
from .diffcore import tensor as T
from .forecaster.model import Forecaster, ModelConfig
from .forecaster.pipeline import Request, StationData, assemble, predict_requests, valid_requests
from .forecaster.transfer import TAG as TRANSFER_TAG


class TrainingError(RuntimeError):
    pass


# -- losses ------------------------------------------------------------------
def _check_pair(pred_shape, truth_shape):
    if tuple(pred_shape) != tuple(truth_shape):
        raise ValueError(f"prediction shape {tuple(pred_shape)} does not match truth shape {tuple(truth_shape)}")


def loss_mse(pred, truth) -> Tensor:
    """Mean squared error; accepts tensors or arrays."""
    pred = pred if isinstance(pred, Tensor) else Tensor(np.asarray(pred, dtype=np.float64))
    truth = np.asarray(truth, dtype=np.float64)
    _check_pair(pred.shape, truth.shape)
    if truth.size == 0:
        raise ValueError("empty input")
    d = pred - Tensor(truth)
    return T.mean(d * d)


def loss_nll(mu, var, truth) -> Tensor:
    """Gaussian NLL without the constant: 0.5 * sum(log var + (y - mu)^2 / var).

    Summed over time steps; with a leading batch axis the sum is averaged
    over the batch.
    """
    mu = mu if isinstance(mu, Tensor) else Tensor(np.asarray(mu, dtype=np.float64))
    var = var if isinstance(var, Tensor) else Tensor(np.asarray(var, dtype=np.float64))
    truth = np.asarray(truth, dtype=np.float64)
    _check_pair(mu.shape, truth.shape)
    _check_pair(var.shape, truth.shape)
    if np.any(~(var.data > 0)):
        raise ValueError("variance must be strictly positive")
    d = Tensor(truth) - mu
    per = T.tsum(T.log(var) + d * d / var, axis=-1) * 0.5
    return T.mean(per) if per.ndim else per


# -- configuration -----------------------------------------------------------
@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 12
    steps_per_epoch: int = 50
    lr: float = 5e-3
    cosine: bool = True
    batch_size: int = 16
    anchors_per_batch: int = 1
    seed: int = 0
    loss: str = "mse"
    patience: int = 5
    clip_norm: float = 1.0
    context_lengths: tuple[int, ...] = ()
    val_stride: int = 24
    phase2_epochs: int = 3
    phase2_steps: int = 20
    phase2_lr: float = 5e-4

    def __post_init__(self):
        object.__setattr__(self, "context_lengths", tuple(int(c) for c in self.context_lengths))
        if min(self.epochs, self.steps_per_epoch, self.phase2_epochs, self.phase2_steps) < 1:
            raise TrainingError("epochs and steps per epoch must be positive")
        if not (self.lr > 0 and self.phase2_lr > 0):
            raise TrainingError("learning rates must be positive")
        if self.batch_size < 1 or self.anchors_per_batch < 1 or self.batch_size % self.anchors_per_batch:
            raise TrainingError("batch_size must be a positive multiple of anchors_per_batch")
        if self.loss not in ("mse", "nll"):
            raise TrainingError(f"unknown loss {self.loss!r}; use 'mse' or 'nll'")
        if self.patience < 1 or self.val_stride < 1:
            raise TrainingError("patience and val_stride must be positive")

    def to_json(self) -> dict:
        d = asdict(self)
        d["context_lengths"] = list(self.context_lengths)
        return d

    @classmethod
    def from_json(cls, obj: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(obj) - known
        if unknown:
            raise TrainingError(f"unknown train config keys: {sorted(unknown)}")
        return cls(**{k: tuple(v) if isinstance(v, list) else v for k, v in obj.items()})


@dataclass
class TrainResult:
    model: Forecaster
    checkpoint: Checkpoint
    log: dict = field(default_factory=dict)

    def write_log(self, path) -> None:
        Path(path).write_text(json.dumps(self.log, indent=2, sort_keys=True))


# -- helpers -----------------------------------------------------------------
def _batch_loss(model: Forecaster, data: StationData, requests, lc: int, loss_kind: str) -> Tensor:
    batch, y = assemble(data, model.cfg, requests, lc)
    yz = (y - data.t_mean) / data.t_std
    mu, var = model.forward(batch)
    if loss_kind == "nll":
        if var is None:
            raise TrainingError("nll loss needs a probabilistic model")
        return loss_nll(mu, var, yz)
    return loss_mse(mu, yz)


def _anchor_grid(data: StationData, cfg: ModelConfig, period: tuple[int, int], stride: int) -> np.ndarray:
    times = np.arange(data.start, data.start + data.panel.n_hours, dtype=np.int64)
    return window_anchors(times, cfg.context_len, cfg.horizon_len, stride, period)


def validation_mse(model: Forecaster, data: StationData, requests: Sequence[Request]) -> float:
    mu, _, y = predict_requests(model, data, requests)
    return float(np.mean((mu - y) ** 2))


def _validation_loss(model: Forecaster, data: StationData, requests, loss_kind: str) -> float:
    """Validation MSE in degrees F (or mean NLL in normalised units for nll)."""
    if loss_kind == "mse":
        return validation_mse(model, data, requests)
    mu, var, y = predict_requests(model, data, requests)
    z = (y - data.t_mean) / data.t_std
    mz = (mu - data.t_mean) / data.t_std
    vz = var / data.t_std**2
    return float(np.mean(0.5 * np.sum(np.log(vz) + (z - mz) ** 2 / vz, axis=1)))


def _run_steps(model, data, opt, rng, pool_ids, anchors, n_steps, cfg: TrainConfig, step0: int,
               schedule=None) -> list[float]:
    losses = []
    per_anchor = cfg.batch_size // cfg.anchors_per_batch
    lcs = cfg.context_lengths or (model.cfg.context_len,)
    for s in range(n_steps):
        chosen = anchors[rng.choice(len(anchors), cfg.anchors_per_batch)]
        reqs = []
        for t0 in chosen:
            ids = pool_ids if len(pool_ids) <= per_anchor else \
                [pool_ids[i] for i in rng.permutation(len(pool_ids))[:per_anchor]]
            reqs.extend(Request(sid, int(t0)) for sid in ids)
        lc = int(lcs[int(rng.integers(len(lcs), 1)[0])])
        if schedule is not None:
            opt.lr = schedule(step0 + s)
        model.store.zero_grad()
        loss = _batch_loss(model, data, reqs, lc, cfg.loss)
        value = loss.item()
        if not np.isfinite(value):
            raise TrainingError(f"non-finite training loss at step {step0 + s}")
        loss.backward()
        opt.step()
        losses.append(value)
    return losses


def _checkpoint(model: Forecaster, data: StationData, split: SplitSpec, cfg: TrainConfig, phase: str,
                extra: dict | None = None) -> Checkpoint:
    meta = {"train": cfg.to_json(), "split": split.to_json(), "phase": phase}
    if extra:
        meta.update(extra)
    return model.checkpoint(data.stats, meta)


# -- phase 1 -----------------------------------------------------------------
def train_phase1(ds: Dataset, split: SplitSpec, model_cfg: ModelConfig, cfg: TrainConfig,
                 data: StationData | None = None) -> TrainResult:
    """Train all parameters with train stations acting as pseudo-targets.

    Each pseudo-target retrieves from the other train stations. Model
    selection uses the validation stations over the validation period.
    """
    if not split.train_station_ids:
        raise DataError("train split has no stations")
    if data is None:
        data = StationData(ds, split.train_station_ids, ds.norm_stats or compute_norm_stats(ds, split))
    periods = split.periods(ds)
    train_anchors = _anchor_grid(data, model_cfg, periods["train"], 1)
    if len(train_anchors) == 0:
        raise DataError("train period is too short for one context + horizon window")
    val_anchors = _anchor_grid(data, model_cfg, periods["val"], cfg.val_stride)
    val_reqs = valid_requests(data, model_cfg, split.val_station_ids, val_anchors)
    train_ids = sorted(split.train_station_ids)
    if model_cfg.uses_retrieval and max(model_cfg.band_ks) > len(train_ids) - 1:
        raise DataError(f"k={max(model_cfg.band_ks)} exceeds the {len(train_ids) - 1} references available "
                        f"to a pseudo-target")
    model = Forecaster(model_cfg)
    rng = SplitMix64(derive_seed(cfg.seed, "phase1"))
    opt = Adam(model.store, model.store.trainable_names(), lr=cfg.lr, clip_norm=cfg.clip_norm)
    total = cfg.epochs * cfg.steps_per_epoch
    schedule = (lambda i: 0.5 * cfg.lr * (1.0 + np.cos(np.pi * i / total))) if cfg.cosine else None
    log = {"phase": 1, "epochs": [], "n_val_windows": len(val_reqs)}
    best, best_state, best_epoch, bad = np.inf, model.store.state(), -1, 0
    for epoch in range(cfg.epochs):
        losses = _run_steps(model, data, opt, rng, train_ids, train_anchors, cfg.steps_per_epoch, cfg,
                            epoch * cfg.steps_per_epoch, schedule)
        val = _validation_loss(model, data, val_reqs, cfg.loss) if val_reqs else float(np.mean(losses))
        log["epochs"].append({"epoch": epoch, "train_loss": float(np.mean(losses)), "val": val})
        if val < best:
            best, best_state, best_epoch, bad = val, model.store.state(), epoch, 0
        else:
            bad += 1
            if bad >= cfg.patience:
                break
    model.store.load_state(best_state)
    log["best_epoch"] = best_epoch
    log["best_val"] = float(best)
    return TrainResult(model, _checkpoint(model, data, split, cfg, "phase1"), log)


# -- phase 2 -----------------------------------------------------------------
def train_phase2(ckpt: Checkpoint, station_id: str, ds: Dataset, split: SplitSpec, cfg: TrainConfig,
                 data: StationData | None = None) -> TrainResult:
    """Fine-tune only the transfer parameters for one train station.

    The optimizer is handed the transfer-tagged names only, so every other
    tensor is left untouched. The best epoch on the station's validation
    period windows is kept.
    """
    model = Forecaster.from_checkpoint(ckpt)
    names = model.transfer_names()
    if not names:
        raise TrainingError("checkpoint has no transfer parameters to adapt")
    if station_id not in ds.stations:
        raise DataError(f"unknown station {station_id}")
    model.store.freeze_all_except(TRANSFER_TAG)
    stats = ckpt.norm_stats or ds.norm_stats or compute_norm_stats(ds, split)
    if data is None:
        data = StationData(ds, split.train_station_ids, stats)
    periods = split.periods(ds)
    mcfg = model.cfg
    train_anchors = _anchor_grid(data, mcfg, periods["train"], 1)
    val_reqs = valid_requests(data, mcfg, [station_id], _anchor_grid(data, mcfg, periods["val"], cfg.val_stride))
    if len(train_anchors) == 0:
        raise DataError("train period is too short for one window")
    rng = SplitMix64(derive_seed(cfg.seed, f"phase2:{station_id}"))
    opt = Adam(model.store, names, lr=cfg.phase2_lr, clip_norm=cfg.clip_norm)
    sub = TrainConfig(**{**cfg.to_json(), "context_lengths": cfg.context_lengths,
                         "anchors_per_batch": cfg.batch_size})
    initial = _validation_loss(model, data, val_reqs, cfg.loss) if val_reqs else float("nan")
    log = {"phase": 2, "station": station_id, "initial_val": initial, "epochs": []}
    best, best_state, best_epoch = np.inf, None, -1
    for epoch in range(cfg.phase2_epochs):
        losses = _run_steps(model, data, opt, rng, [station_id], train_anchors, cfg.phase2_steps, sub,
                            epoch * cfg.phase2_steps)
        val = _validation_loss(model, data, val_reqs, cfg.loss) if val_reqs else float(np.mean(losses))
        log["epochs"].append({"epoch": epoch, "train_loss": float(np.mean(losses)), "val": val})
        if val < best:
            best, best_state, best_epoch = val, model.store.state(), epoch
    model.store.load_state(best_state)
    model.store.set_trainable(None, True)
    log["best_epoch"] = best_epoch
    log["best_val"] = float(best)
    return TrainResult(model, _checkpoint(model, data, split, cfg, "phase2", {"adapted_station": station_id}), log)
