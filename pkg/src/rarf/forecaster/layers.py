"""Building blocks on top of the autodiff engine."""

from __future__ import annotations

import numpy as np

from ..diffcore import ParamStore, SplitMix64, Tensor, glorot
from ..diffcore import tensor as T


class Linear:
    def __init__(self, store: ParamStore, name: str, n_in: int, n_out: int, rng: SplitMix64,
                 tag: str = "", bias: bool = True, scale: float = 1.0):
        self.W = store.add(f"{name}.W", scale * glorot(rng, n_in, n_out), tag)
        self.b = store.add(f"{name}.b", np.zeros(n_out), tag) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        return T.affine(x, self.W, self.b)


class LayerNorm:
    def __init__(self, store: ParamStore, name: str, dim: int, tag: str = "", eps: float = 1e-5):
        self.g = store.add(f"{name}.g", np.ones(dim), tag)
        self.b = store.add(f"{name}.b", np.zeros(dim), tag)
        self.eps = eps

    def __call__(self, x: Tensor) -> Tensor:
        return T.layer_norm(x, self.g, self.b, self.eps)


class FeedForward:
    def __init__(self, store: ParamStore, name: str, dim: int, hidden: int, rng: SplitMix64, tag: str = ""):
        self.l1 = Linear(store, f"{name}.l1", dim, hidden, rng, tag)
        self.l2 = Linear(store, f"{name}.l2", hidden, dim, rng, tag, scale=0.5)

    def __call__(self, x: Tensor) -> Tensor:
        return self.l2(T.relu(self.l1(x)))


def attention(q: Tensor, k: Tensor, v: Tensor) -> Tensor:
    """Scaled dot-product attention over the second-to-last axis of ``k``/``v``."""
    scores = T.matmul(q, T.swapaxes(k, -1, -2)) * (1.0 / np.sqrt(q.shape[-1]))
    return T.matmul(T.softmax(scores, axis=-1), v)


class MultiHeadAttention:
    def __init__(self, store: ParamStore, name: str, dim: int, heads: int, rng: SplitMix64, tag: str = ""):
        if dim % heads:
            raise ValueError(f"d_model={dim} not divisible by heads={heads}")
        self.heads = heads
        self.q = Linear(store, f"{name}.q", dim, dim, rng, tag)
        self.k = Linear(store, f"{name}.k", dim, dim, rng, tag)
        self.v = Linear(store, f"{name}.v", dim, dim, rng, tag)
        self.o = Linear(store, f"{name}.o", dim, dim, rng, tag, scale=0.5)

    def _split(self, x: Tensor) -> Tensor:
        *lead, n, d = x.shape
        h = self.heads
        x = T.reshape(x, tuple(lead) + (n, h, d // h))
        nd = len(lead)
        return T.transpose(x, tuple(range(nd)) + (nd + 1, nd, nd + 2))

    def _merge(self, x: Tensor) -> Tensor:
        *lead, h, n, dk = x.shape
        nd = len(lead)
        x = T.transpose(x, tuple(range(nd)) + (nd + 1, nd, nd + 2))
        return T.reshape(x, tuple(lead) + (n, h * dk))

    def __call__(self, x: Tensor, memory: Tensor | None = None) -> Tensor:
        memory = x if memory is None else memory
        q = self._split(self.q(x))
        k = self._split(self.k(memory))
        v = self._split(self.v(memory))
        return self.o(self._merge(attention(q, k, v)))


def positional_encoding(ages: np.ndarray, dim: int) -> np.ndarray:
    """Sinusoidal encoding of step ages (0 = most recent step)."""
    ages = np.asarray(ages, dtype=np.float64)[:, None]
    i = np.arange(dim // 2, dtype=np.float64)[None, :]
    angle = ages / np.power(100.0, 2.0 * i / dim)
    pe = np.zeros((ages.shape[0], dim))
    pe[:, 0::2] = np.sin(angle)
    pe[:, 1::2] = np.cos(angle)[:, : dim // 2]
    return pe
