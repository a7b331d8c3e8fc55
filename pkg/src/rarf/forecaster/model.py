"""Resolution-aware retrieval-augmented forecaster.

Each band has its own encoder, transfer, gate and decoder. Band forecasts are
coefficient sequences; the final forecast is their inverse wavelet transform.
With ``levels=0`` there is a single band holding the raw series, which is the
plain retrieval-augmented model; with ``transfer="none"`` the model only sees
the target's own context.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from ..diffcore import Checkpoint, ParamStore, SplitMix64, Tensor, derive_seed
from ..diffcore import tensor as T
from ..multires import BandSpec, analysis_matrix
from .layers import FeedForward, LayerNorm, Linear, MultiHeadAttention, positional_encoding
from .transfer import TAG as TRANSFER_TAG
from .transfer import TRANSFER_KINDS, LocationMLP, build_transfer

VAR_FLOOR = 1e-6


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    levels: int = 3
    wavelet: str = "haar"
    context_len: int = 96
    horizon_len: int = 48
    n_features: int = 5
    target_index: int = 2
    d_model: int = 16
    d_loc: int = 16
    heads: int = 2
    layers: int = 2
    d_ff: int = 32
    transfer: str = "fc"
    band_ks: tuple[int, ...] = (10, 25, 50)
    tau_km: float = 100.0
    fc_idw: bool = True
    probabilistic: bool = False
    loc_center: tuple[float, float, float] = (0.0, 0.0, 0.0)
    loc_scale: tuple[float, float, float] = (1.0, 1.0, 1.0)
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "band_ks", tuple(int(k) for k in self.band_ks))
        object.__setattr__(self, "loc_center", tuple(float(v) for v in self.loc_center))
        object.__setattr__(self, "loc_scale", tuple(float(v) for v in self.loc_scale))
        if self.levels < 0:
            raise ModelError(f"levels must be >= 0, got {self.levels}")
        f = 2**self.levels
        if self.context_len % f or self.horizon_len % f or self.horizon_len < 1:
            raise ModelError(f"context_len={self.context_len} and horizon_len={self.horizon_len} "
                             f"must be divisible by 2**levels = {f}")
        if self.transfer not in TRANSFER_KINDS + ("none",):
            raise ModelError(f"unknown transfer kind {self.transfer!r}")
        if self.d_model % self.heads:
            raise ModelError(f"d_model={self.d_model} not divisible by heads={self.heads}")
        if self.transfer != "none":
            if len(self.band_ks) != self.n_bands:
                raise ModelError(f"need one k per band ({self.n_bands}), got {self.band_ks}")
            if any(k < 1 for k in self.band_ks) or any(a >= b for a, b in zip(self.band_ks, self.band_ks[1:])):
                raise ModelError(f"band ks must be positive and strictly increasing from fine to coarse, "
                                 f"got {self.band_ks}")
        if min(self.loc_scale) <= 0:
            raise ModelError("location scales must be positive")

    @property
    def spec(self) -> BandSpec | None:
        return BandSpec(self.levels, self.wavelet) if self.levels > 0 else None

    @property
    def n_bands(self) -> int:
        return max(self.levels, 1)

    @property
    def uses_retrieval(self) -> bool:
        return self.transfer != "none"

    def band_names(self) -> tuple[str, ...]:
        return self.spec.band_names() if self.spec else ("full",)

    def band_ks_map(self) -> dict[str, int]:
        return dict(zip(self.band_names(), self.band_ks)) if self.uses_retrieval else {}

    def band_layout(self, n: int) -> list[tuple[str, int, int]]:
        """``(band, steps, channels)`` for a series of length ``n``."""
        names = self.band_names()
        if self.levels == 0:
            return [(names[0], n, 1)]
        out = [(names[j - 1], n // 2**j, 1) for j in range(1, self.levels)]
        out.append((names[-1], n // 2**self.levels, 2))
        return out

    def to_json(self) -> dict:
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = list(v)
        return d

    @classmethod
    def from_json(cls, obj: dict) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(obj) - known
        if unknown:
            raise ModelError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**{k: tuple(v) if isinstance(v, list) else v for k, v in obj.items()})


@dataclass
class GaussianForecast:
    mu: np.ndarray
    var: np.ndarray

    def __post_init__(self):
        if np.any(~(self.var > 0)):
            raise ModelError("forecast variance must be strictly positive")

    @property
    def sigma(self) -> np.ndarray:
        return np.sqrt(self.var)

    def interval(self, z: float = 1.959964) -> tuple[np.ndarray, np.ndarray]:
        s = self.sigma
        return self.mu - z * s, self.mu + z * s


def clock_features(hours: np.ndarray) -> np.ndarray:
    """Hour-of-day phase as ``(sin, cos)`` in a trailing axis."""
    ang = 2.0 * np.pi * (np.asarray(hours, dtype=np.float64) % 24.0) / 24.0
    return np.stack([np.sin(ang), np.cos(ang)], axis=-1)


def step_hours(t0: np.ndarray, steps: int, stride: int, future: bool = False) -> np.ndarray:
    """Epoch hours represented by band steps relative to anchors ``t0`` ``[...]`` -> ``[..., steps]``.

    Context steps stand for the last hour they cover; horizon steps likewise.
    """
    t0 = np.asarray(t0, dtype=np.float64)[..., None]
    k = np.arange(steps, dtype=np.float64)
    if future:
        return t0 + (k + 1) * stride
    return t0 - (steps - 1 - k) * stride


def band_inputs(ctx: np.ndarray, cfg: ModelConfig) -> dict[str, np.ndarray]:
    """Split contexts ``[..., L, F]`` into per-band inputs ``[..., T_b, F * channels]``."""
    n = ctx.shape[-2]
    layout = cfg.band_layout(n)
    if n == 0:
        return {name: np.zeros(ctx.shape[:-2] + (0, ctx.shape[-1] * c)) for name, _, c in layout}
    if cfg.levels == 0:
        return {layout[0][0]: ctx}
    coeffs = analysis_matrix(n, cfg.spec) @ ctx
    out, start = {}, 0
    for name, steps, ch in layout:
        parts = [coeffs[..., start + c * steps:start + (c + 1) * steps, :] for c in range(ch)]
        out[name] = np.concatenate(parts, axis=-1)
        start += steps * ch
    return out


@dataclass
class Batch:
    """Inputs for one forward pass.

    ``pool_ctx`` holds full contexts of reference stations per anchor
    ``[A, P, L_x, F]``; targets index into it through ``anchor`` and the
    per-band neighbour indices.
    """

    tgt_ctx: np.ndarray
    tgt_loc: np.ndarray
    tgt_t0: np.ndarray
    pool_ctx: np.ndarray | None = None
    pool_loc: np.ndarray | None = None
    pool_t0: np.ndarray | None = None
    anchor: np.ndarray | None = None
    nb_idx: dict[str, np.ndarray] = field(default_factory=dict)
    nb_dist: dict[str, np.ndarray] = field(default_factory=dict)
    nb_pair_dist: dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def size(self) -> int:
        return self.tgt_ctx.shape[0]


class Encoder:
    def __init__(self, store: ParamStore, name: str, n_in: int, cfg: ModelConfig, rng: SplitMix64):
        d = cfg.d_model
        self.d = d
        self.inp = Linear(store, f"{name}.in", n_in, d, rng, "encoder")
        self.clock = Linear(store, f"{name}.clock", 2, d, rng, "encoder", bias=False)
        self.blocks = []
        for i in range(cfg.layers):
            self.blocks.append((
                LayerNorm(store, f"{name}.b{i}.ln1", d, "encoder"),
                MultiHeadAttention(store, f"{name}.b{i}.att", d, cfg.heads, rng, "encoder"),
                LayerNorm(store, f"{name}.b{i}.ln2", d, "encoder"),
                FeedForward(store, f"{name}.b{i}.ff", d, cfg.d_ff, rng, "encoder"),
            ))

    def __call__(self, x: np.ndarray, hours: np.ndarray) -> Tensor:
        """``[..., T, n_in]`` -> ``[..., T, d_model]``; ages count back from the last step.

        ``hours`` gives the epoch hour of each step ``[..., T]``.
        """
        t = x.shape[-2]
        if t == 0:
            return Tensor(np.zeros(x.shape[:-1] + (self.d,)))
        h = self.inp(Tensor(x)) + self.clock(Tensor(clock_features(hours)))
        h = h + Tensor(positional_encoding(np.arange(t)[::-1], self.d))
        for ln1, att, ln2, ff in self.blocks:
            h = h + att(ln1(h))
            h = h + ff(ln2(h))
        return h


class Decoder:
    def __init__(self, store: ParamStore, name: str, steps: int, n_out: int, cfg: ModelConfig, rng: SplitMix64,
                 memory_steps: int):
        d = cfg.d_model
        self.steps, self.n_out, self.memory_steps = steps, n_out, memory_steps
        self.queries = store.add(f"{name}.queries", 0.5 * rng.normal((steps, d)), "decoder")
        self.init = Linear(store, f"{name}.init", d, d, rng, "decoder")
        self.clock = Linear(store, f"{name}.clock", 2, d, rng, "decoder", bias=False)
        self.ln1 = LayerNorm(store, f"{name}.ln1", d, "decoder")
        self.att = MultiHeadAttention(store, f"{name}.att", d, cfg.heads, rng, "decoder")
        self.ln2 = LayerNorm(store, f"{name}.ln2", d, "decoder")
        self.ff = FeedForward(store, f"{name}.ff", d, cfg.d_ff, rng, "decoder")
        self.ln3 = LayerNorm(store, f"{name}.ln3", d, "decoder")
        self.head = Linear(store, f"{name}.head", d, n_out, rng, "decoder")
        # linear read-out of the whole (right-aligned) memory
        self.flat = Linear(store, f"{name}.flat", memory_steps * d, steps * n_out, rng, "decoder", bias=False,
                           scale=0.1)

    def __call__(self, memory: Tensor, hours: np.ndarray) -> Tensor:
        """``hours`` ``[B, H]`` are the epoch hours the queries stand for."""
        b = memory.shape[0]
        x = self.queries + self.clock(Tensor(clock_features(hours)))
        if memory.shape[1] > 0:
            # every query starts from the most recent memory step
            last = T.getitem(memory, (slice(None), slice(-1, None)))
            x = x + self.init(last)
            x = x + self.att(self.ln1(x), memory)
        x = x + self.ff(self.ln2(x))
        out = self.head(self.ln3(x))
        t, d = memory.shape[1], memory.shape[2]
        if t == 0:
            return out
        if t < self.memory_steps:
            memory = T.concat([Tensor(np.zeros((b, self.memory_steps - t, d))), memory], axis=1)
        flat = self.flat(T.reshape(memory, (b, self.memory_steps * d)))
        return out + T.reshape(flat, (b, self.steps, self.n_out))


class Gate:
    """``out + sigmoid(out Wo + tgt Wt + b) * tgt`` with the target rows right-aligned."""

    def __init__(self, store: ParamStore, name: str, d: int, rng: SplitMix64):
        self.wo = Linear(store, f"{name}.wo", d, d, rng, "gate")
        self.wt = Linear(store, f"{name}.wt", d, d, rng, "gate", bias=False)

    def __call__(self, out: Tensor, tgt: Tensor) -> Tensor:
        b, t, d = out.shape
        tc = tgt.shape[1]
        if tc == 0:
            return out
        if tc < t:
            tgt = T.concat([Tensor(np.zeros((b, t - tc, d))), tgt], axis=1)
        elif tc > t:
            raise ModelError(f"target context has {tc} band steps, more than the model's {t}")
        return out + T.sigmoid(self.wo(out) + self.wt(tgt)) * tgt


class BandModel:
    def __init__(self, store: ParamStore, band: str, ctx_steps: int, hor_steps: int, channels: int,
                 cfg: ModelConfig, rng: SplitMix64):
        self.band = band
        self.ctx_steps = ctx_steps
        self.hor_steps = hor_steps
        self.channels = channels
        self.stride = cfg.horizon_len // hor_steps
        n_in = cfg.n_features * channels
        self.encoder = Encoder(store, f"{band}.enc", n_in, cfg, rng.spawn("enc"))
        n_out = channels * (2 if cfg.probabilistic else 1)
        self.decoder = Decoder(store, f"{band}.dec", hor_steps, n_out, cfg, rng.spawn("dec"), ctx_steps)
        self.transfer = None
        self.gate = None
        if cfg.uses_retrieval:
            self.transfer = build_transfer(cfg.transfer, store, f"{band}.transfer", cfg.d_model, cfg.d_loc,
                                           ctx_steps, rng.spawn("transfer"), tau_km=cfg.tau_km, idw=cfg.fc_idw)
            self.gate = Gate(store, f"{band}.gate", cfg.d_model, rng.spawn("gate"))


class Forecaster:
    """Parameters plus forward pass; outputs are in normalised target units."""

    def __init__(self, cfg: ModelConfig, store: ParamStore | None = None):
        self.cfg = cfg
        self.store = store or ParamStore()
        rng = SplitMix64(derive_seed(cfg.seed, "init"))
        self.location = None
        if cfg.uses_retrieval:
            self.location = LocationMLP(self.store, "location", cfg.d_loc, rng.spawn("location"),
                                        cfg.loc_center, cfg.loc_scale)
        ctx = {b: (s, c) for b, s, c in cfg.band_layout(cfg.context_len)}
        hor = {b: s for b, s, _ in cfg.band_layout(cfg.horizon_len)}
        self.bands = {b: BandModel(self.store, b, ctx[b][0], hor[b], ctx[b][1], cfg, rng.spawn(b))
                      for b in cfg.band_names()}
        self.synthesis = (analysis_matrix(cfg.horizon_len, cfg.spec) if cfg.levels > 0
                          else np.eye(cfg.horizon_len))
        self.calls: list[tuple[str, int]] = []

    # -- forward ---------------------------------------------------------
    def band_coefficients(self, batch: Batch) -> dict[str, Tensor]:
        """Per-band decoder outputs ``[B, H_b, channels * (1 or 2)]``."""
        cfg = self.cfg
        b = batch.size
        tgt_in = band_inputs(batch.tgt_ctx, cfg)
        pool_in = None
        loc_pool = loc_tar = None
        if cfg.uses_retrieval:
            if batch.pool_ctx is None or not batch.nb_idx:
                raise ModelError("retrieval model needs reference contexts and neighbour indices")
            missing = set(self.bands) - set(batch.nb_idx)
            if missing:
                raise ModelError(f"batch lacks retrieval lists for bands {sorted(missing)}")
            pool_in = band_inputs(batch.pool_ctx, cfg)
            loc_pool = self.location(batch.pool_loc)
            loc_tar = self.location(batch.tgt_loc)
        self.calls = []
        out = {}
        for name, bm in self.bands.items():
            tx = tgt_in[name]
            tgt_state = bm.encoder(tx, step_hours(batch.tgt_t0, tx.shape[-2], bm.stride))
            if bm.transfer is None:
                memory = tgt_state
            else:
                idx = np.asarray(batch.nb_idx[name])
                k = idx.shape[1]
                a, p = batch.pool_ctx.shape[:2]
                flat = batch.anchor[:, None] * p + idx
                xin = pool_in[name]
                # encode only the pool rows that are referenced
                used, inv = np.unique(flat, return_inverse=True)
                hours = np.repeat(step_hours(batch.pool_t0, bm.ctx_steps, bm.stride), p, axis=0)
                states = bm.encoder(xin.reshape((a * p,) + xin.shape[2:])[used], hours[used])
                nb_states = T.take(states, inv.reshape(b, k), axis=0)
                loc_nb = T.take(loc_pool, idx, axis=0)
                moved = bm.transfer(nb_states, loc_nb, loc_tar, batch.nb_dist[name],
                                    pair_dist=batch.nb_pair_dist.get(name))
                self.calls.append((name, k))
                memory = bm.gate(moved, tgt_state)
            out[name] = bm.decoder(memory, step_hours(batch.tgt_t0, bm.hor_steps, bm.stride, future=True))
        return out

    def level(self, batch: Batch) -> np.ndarray:
        """Mean of the target's own context (zero without context), added to every output."""
        ctx = batch.tgt_ctx
        if ctx.shape[1] == 0:
            return np.zeros(ctx.shape[0])
        return ctx[:, :, self.cfg.target_index].mean(axis=1)

    def forward(self, batch: Batch) -> tuple[Tensor, Tensor | None]:
        """Mean ``[B, L_y]`` and, for probabilistic models, variance ``[B, L_y]``."""
        coeffs = self.band_coefficients(batch)
        mus, raws = [], []
        for name, bm in self.bands.items():
            c = coeffs[name]
            b = c.shape[0]
            mu = T.getitem(c, (Ellipsis, slice(0, bm.channels)))
            # channel-major flattening puts d_J before a_J
            mus.append(T.reshape(T.swapaxes(mu, 1, 2), (b, bm.hor_steps * bm.channels)))
            if self.cfg.probabilistic:
                raw = T.getitem(c, (Ellipsis, slice(bm.channels, 2 * bm.channels)))
                raws.append(T.reshape(T.swapaxes(raw, 1, 2), (b, bm.hor_steps * bm.channels)))
        A = Tensor(self.synthesis)
        mu = T.matmul(T.concat(mus, axis=1), A) + Tensor(self.level(batch)[:, None])
        if not self.cfg.probabilistic:
            return mu, None
        v = T.softplus(T.concat(raws, axis=1)) + VAR_FLOOR
        var = T.matmul(v, Tensor(self.synthesis * self.synthesis))
        return mu, var

    # -- persistence -----------------------------------------------------
    def transfer_names(self) -> list[str]:
        return self.store.names_with_tag(TRANSFER_TAG)

    def checkpoint(self, norm_stats: dict[str, tuple[float, float]] | None = None, extra: dict | None = None
                   ) -> Checkpoint:
        config = {"model": self.cfg.to_json()}
        if extra:
            config.update(extra)
        return Checkpoint(config, self.store.state(),
                          {n: self.store.is_trainable(n) for n in self.store.names()},
                          {n: self.store.tag(n) for n in self.store.names()},
                          dict(norm_stats or {}))

    @classmethod
    def from_checkpoint(cls, ckpt: Checkpoint) -> "Forecaster":
        if "model" not in ckpt.config:
            raise ModelError("checkpoint has no model configuration")
        model = cls(ModelConfig.from_json(ckpt.config["model"]))
        model.store.load_state(ckpt.params)
        return model


def config_json(cfg: ModelConfig) -> str:
    return json.dumps(cfg.to_json(), sort_keys=True)
