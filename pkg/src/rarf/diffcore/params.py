"""Named parameter storage and the Adam optimizer."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .rng import SplitMix64
from .tensor import Tensor


class ParamStore:
    """Ordered registry of named leaf tensors with per-name trainable flags.

    Layers keep references to the :class:`Tensor` objects handed out by
    :meth:`add`; loading a checkpoint writes into those same buffers so the
    references stay valid.
    """

    def __init__(self):
        self._params: dict[str, Tensor] = {}
        self._trainable: dict[str, bool] = {}
        self._tags: dict[str, str] = {}

    def add(self, name: str, value: np.ndarray, tag: str = "", trainable: bool = True) -> Tensor:
        if name in self._params:
            raise KeyError(f"duplicate parameter name {name!r}")
        t = Tensor(np.array(value, dtype=np.float64), requires_grad=True, name=name)
        self._params[name] = t
        self._trainable[name] = trainable
        self._tags[name] = tag
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def names(self) -> list[str]:
        return list(self._params)

    def items(self):
        return self._params.items()

    def tag(self, name: str) -> str:
        return self._tags[name]

    def names_with_tag(self, tag: str) -> list[str]:
        return [n for n, t in self._tags.items() if t == tag]

    def is_trainable(self, name: str) -> bool:
        return self._trainable[name]

    def set_trainable(self, names=None, trainable: bool = True) -> None:
        for n in self._params if names is None else names:
            self._trainable[n] = trainable

    def freeze_all_except(self, tag: str) -> None:
        for n in self._params:
            self._trainable[n] = self._tags[n] == tag

    def trainable_names(self) -> list[str]:
        return [n for n in self._params if self._trainable[n]]

    def zero_grad(self) -> None:
        for t in self._params.values():
            t.grad = None

    def num_values(self) -> int:
        return sum(t.data.size for t in self._params.values())

    def state(self) -> dict[str, np.ndarray]:
        """Deep copy of all parameter values."""
        return {n: t.data.copy() for n, t in self._params.items()}

    def load_state(self, state: dict[str, np.ndarray], strict: bool = True) -> None:
        if strict and set(state) != set(self._params):
            missing = sorted(set(self._params) - set(state))
            extra = sorted(set(state) - set(self._params))
            raise KeyError(f"state mismatch: missing={missing[:5]} unexpected={extra[:5]}")
        for n, v in state.items():
            if n not in self._params:
                continue
            t = self._params[n]
            if t.data.shape != v.shape:
                raise ValueError(f"shape mismatch for {n}: {t.data.shape} vs {v.shape}")
            t.data[...] = v


def glorot(rng: SplitMix64, fan_in: int, fan_out: int, shape=None) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(shape or (fan_in, fan_out), -limit, limit)


@dataclass
class Adam:
    """Adam over an explicit list of parameter names.

    Only the names given at construction are ever touched, which is how
    freezing is enforced structurally.
    """

    store: ParamStore
    names: list[str]
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    clip_norm: float | None = None
    t: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        for n in self.names:
            shape = self.store[n].data.shape
            self.m.setdefault(n, np.zeros(shape))
            self.v.setdefault(n, np.zeros(shape))

    def step(self, grads: dict[str, np.ndarray] | None = None) -> None:
        if grads is None:
            grads = {n: self.store[n].grad for n in self.names if self.store[n].grad is not None}
        if self.clip_norm is not None:
            total = np.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
            if total > self.clip_norm:
                scale = self.clip_norm / total
                grads = {n: g * scale for n, g in grads.items()}
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1**self.t
        c2 = 1.0 - b2**self.t
        for n in self.names:
            g = grads.get(n)
            if g is None:
                continue
            m = self.m[n]
            v = self.v[n]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            self.store[n].data -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def adam_step(store: ParamStore, grads: dict[str, np.ndarray], lr: float = 1e-3, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8, state: Adam | None = None) -> Adam:
    """One Adam update of the trainable parameters in ``store``.

    Pass the returned optimizer back as ``state`` to continue the moment
    estimates across calls.
    """
    if state is None:
        state = Adam(store, store.trainable_names(), lr=lr, beta1=beta1, beta2=beta2, eps=eps)
    state.step(grads)
    return state
