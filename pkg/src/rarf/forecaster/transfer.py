"""Location embeddings and the three transfer components.

All transfers map retrieved encoder states ``[B, k, T, d]`` plus location
embeddings to one approximated target state ``[B, T, d]``.
"""

from __future__ import annotations

import numpy as np

from ..diffcore import ParamStore, SplitMix64, Tensor
from ..diffcore import tensor as T
from .layers import Linear

TRANSFER_KINDS = ("fc", "gnn", "loc_attn")
TAG = "transfer"


class TransferError(ValueError):
    pass


def _check_nonempty(states: Tensor) -> None:
    if states.ndim != 4:
        raise TransferError(f"expected retrieved states [B, k, T, d], got shape {states.shape}")
    if states.shape[1] == 0:
        raise TransferError("transfer needs at least one retrieved station")


class LocationMLP:
    """Two-layer MLP on standardised (lat, lon, elevation)."""

    def __init__(self, store: ParamStore, name: str, d_loc: int, rng: SplitMix64,
                 center=(0.0, 0.0, 0.0), scale=(1.0, 1.0, 1.0), tag: str = "location"):
        self.center = np.asarray(center, dtype=np.float64)
        self.scale = np.asarray(scale, dtype=np.float64)
        self.l1 = Linear(store, f"{name}.l1", 3, d_loc, rng, tag)
        self.l2 = Linear(store, f"{name}.l2", d_loc, d_loc, rng, tag)

    def standardize(self, coords: np.ndarray) -> np.ndarray:
        return (np.asarray(coords, dtype=np.float64) - self.center) / self.scale

    def __call__(self, coords: np.ndarray) -> Tensor:
        return self.l2(T.tanh(self.l1(Tensor(self.standardize(coords)))))


def idw_weights(dist: np.ndarray, eps: float = 1.0) -> np.ndarray:
    """Softmax of ``-log(d + eps)``, i.e. normalised inverse distances."""
    logits = -np.log(np.asarray(dist, dtype=np.float64) + eps)
    logits -= logits.max(axis=-1, keepdims=True)
    w = np.exp(logits)
    return w / w.sum(axis=-1, keepdims=True)


class FCTransfer:
    """Per-station residual MLP on ``[E; l_i; l_tar]`` then a weighted average."""

    def __init__(self, store: ParamStore, name: str, d_model: int, d_loc: int, rng: SplitMix64,
                 idw: bool = True, hidden: int | None = None):
        hidden = hidden or 2 * d_model
        self.idw = idw
        self.we = Linear(store, f"{name}.we", d_model, hidden, rng, TAG)
        self.wl = Linear(store, f"{name}.wl", d_loc, hidden, rng, TAG, bias=False)
        self.wt = Linear(store, f"{name}.wt", d_loc, hidden, rng, TAG, bias=False)
        self.out = Linear(store, f"{name}.out", hidden, d_model, rng, TAG, scale=0.5)

    def weights(self, dist: np.ndarray) -> np.ndarray:
        dist = np.asarray(dist, dtype=np.float64)
        if self.idw:
            return idw_weights(dist)
        return np.full(dist.shape, 1.0 / dist.shape[-1])

    def __call__(self, states: Tensor, loc_nb: Tensor, loc_tar: Tensor, dist: np.ndarray, **_) -> Tensor:
        _check_nonempty(states)
        b, k, t, d = states.shape
        # location terms are constant over time: [B, k, 1, h] and [B, 1, 1, h]
        lterm = T.reshape(self.wl(loc_nb), (b, k, 1, -1))
        tterm = T.reshape(self.wt(loc_tar), (b, 1, 1, -1))
        h = states + self.out(T.relu(self.we(states) + lterm + tterm))
        w = Tensor(self.weights(dist).reshape(b, k, 1, 1))
        return T.tsum(h * w, axis=1)


def gnn_adjacency(pair_dist: np.ndarray, tau: float) -> np.ndarray:
    """Symmetric-normalised ``D^-1/2 W D^-1/2`` with ``W = exp(-d / tau)`` (self-loops included)."""
    w = np.exp(-np.asarray(pair_dist, dtype=np.float64) / tau)
    deg = w.sum(axis=-1)
    inv = 1.0 / np.sqrt(deg)
    return inv[..., :, None] * w * inv[..., None, :]


class GNNTransfer:
    """Two rounds of graph convolution over retrieved nodes plus the target node."""

    def __init__(self, store: ParamStore, name: str, d_model: int, d_loc: int, rng: SplitMix64,
                 tau_km: float = 100.0, rounds: int = 2):
        if tau_km <= 0:
            raise TransferError(f"edge temperature must be positive, got {tau_km}")
        self.tau = tau_km
        self.rounds = rounds
        self.wloc = Linear(store, f"{name}.wloc", d_loc, d_model, rng, TAG, bias=False)
        self.layers = [Linear(store, f"{name}.r{r}", d_model, d_model, rng, TAG) for r in range(rounds)]

    def __call__(self, states: Tensor, loc_nb: Tensor, loc_tar: Tensor, dist: np.ndarray,
                 pair_dist: np.ndarray | None = None, **_) -> Tensor:
        _check_nonempty(states)
        b, k, t, d = states.shape
        if pair_dist is None:
            raise TransferError("graph transfer needs pairwise distances between all nodes")
        adj = gnn_adjacency(pair_dist, self.tau)
        if adj.shape != (b, k + 1, k + 1):
            raise TransferError(f"pairwise distances must be [B, k+1, k+1], got {adj.shape}")
        nb = states + T.reshape(self.wloc(loc_nb), (b, k, 1, d))
        tgt = T.broadcast_to(T.reshape(self.wloc(loc_tar), (b, 1, 1, d)), (b, 1, t, d))
        h = T.concat([nb, tgt], axis=1)
        for r, layer in enumerate(self.layers):
            last = r == self.rounds - 1
            a = Tensor(adj[:, -1:, :] if last else adj)
            mixed = T.reshape(T.matmul(a, T.reshape(h, (b, k + 1, t * d))), (b, a.shape[1], t, d))
            h = T.relu(layer(mixed)) + (T.getitem(h, (slice(None), slice(-1, None))) if last else h)
        return T.reshape(h, (b, t, d))


class LocAttnTransfer:
    """Attention over stations with per-timestep queries from the target's location."""

    def __init__(self, store: ParamStore, name: str, steps: int, d_loc: int, rng: SplitMix64, d_k: int = 8):
        self.steps = steps
        self.d_k = d_k
        self.P = Linear(store, f"{name}.P", d_loc, steps * d_k, rng, TAG, bias=False)
        self.K = Linear(store, f"{name}.K", d_loc, d_k, rng, TAG, bias=False)

    def weights(self, loc_nb: Tensor, loc_tar: Tensor) -> Tensor:
        """Attention ``[B, T, k]``; each row sums to one over stations."""
        b = loc_tar.shape[0]
        q = T.reshape(self.P(loc_tar), (b, self.steps, self.d_k))
        keys = self.K(loc_nb)
        scores = T.matmul(q, T.swapaxes(keys, -1, -2)) * (1.0 / np.sqrt(self.d_k))
        return T.softmax(scores, axis=-1)

    def __call__(self, states: Tensor, loc_nb: Tensor, loc_tar: Tensor, dist=None, **_) -> Tensor:
        _check_nonempty(states)
        b, k, t, d = states.shape
        if t != self.steps:
            raise TransferError(f"states have {t} steps but the query projection was built for {self.steps}")
        alpha = self.weights(loc_nb, loc_tar)
        # out[b, t] = sum_i alpha[b, t, i] * states[b, i, t]
        s = T.transpose(states, (0, 2, 1, 3))
        a = T.reshape(alpha, (b, t, 1, k))
        return T.reshape(T.matmul(a, s), (b, t, d))


def build_transfer(kind: str, store: ParamStore, name: str, d_model: int, d_loc: int, steps: int,
                   rng: SplitMix64, tau_km: float = 100.0, idw: bool = True):
    if kind == "fc":
        return FCTransfer(store, name, d_model, d_loc, rng, idw=idw)
    if kind == "gnn":
        return GNNTransfer(store, name, d_model, d_loc, rng, tau_km=tau_km)
    if kind == "loc_attn":
        return LocAttnTransfer(store, name, steps, d_loc, rng)
    raise TransferError(f"unknown transfer kind {kind!r}; choose from {TRANSFER_KINDS}")
