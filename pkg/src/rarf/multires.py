"""Decimated orthonormal multilevel DWT with periodic boundaries.

Coefficients at level ``j`` come from the level ``j-1`` approximation::

    a_j[k] = sum_n h[n] a_{j-1}[(2k + n - s) mod M]
    d_j[k] = sum_n g[n] a_{j-1}[(2k + n - s) mod M],   g[n] = (-1)^n h[L-1-n]

with phase ``s = L/2 - 1`` for a filter of length ``L`` (the usual
"periodization" alignment, so ``s = 0`` for Haar). For Haar this gives
``d[k] = (x[2k] - x[2k+1]) / sqrt(2)``. The transform is orthonormal, so
reconstruction is the transpose and energy is preserved.

Bands group the coefficient sequences for retrieval: with three levels the
``fast`` band is ``d1``, ``moderate`` is ``d2`` and ``slow`` carries ``d3`` and
``a3`` as two channels of equal length.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

_SQ2 = np.sqrt(2.0)
_SQ3 = np.sqrt(3.0)

FILTERS = {
    "haar": np.array([1.0, 1.0]) / _SQ2,
    "db2": np.array([1.0 + _SQ3, 3.0 + _SQ3, 3.0 - _SQ3, 1.0 - _SQ3]) / (4.0 * _SQ2),
}

BAND_NAMES_3 = ("fast", "moderate", "slow")


class DecompositionError(ValueError):
    pass


@dataclass(frozen=True)
class BandSpec:
    levels: int = 3
    wavelet: str = "haar"

    def __post_init__(self):
        if self.levels < 1:
            raise DecompositionError(f"levels must be >= 1, got {self.levels}")
        if self.wavelet not in FILTERS:
            raise DecompositionError(f"unknown wavelet {self.wavelet!r}; choose from {sorted(FILTERS)}")

    @property
    def factor(self) -> int:
        return 2**self.levels

    def coefficient_names(self) -> list[str]:
        return [f"d{j}" for j in range(1, self.levels + 1)] + [f"a{self.levels}"]

    def band_names(self) -> tuple[str, ...]:
        if self.levels == 3:
            return BAND_NAMES_3
        return tuple(f"d{j}" for j in range(1, self.levels)) + ("slow",)

    def bands(self) -> dict[str, list[str]]:
        """Band name -> coefficient names, finest band first."""
        names = self.band_names()
        out = {names[j - 1]: [f"d{j}"] for j in range(1, self.levels)}
        out[names[-1]] = [f"d{self.levels}", f"a{self.levels}"]
        return out

    def check_length(self, n: int, what: str = "input length") -> None:
        if n % self.factor:
            raise DecompositionError(
                f"{what} {n} is not divisible by 2**levels = {self.factor} (levels={self.levels})"
            )

    def coefficient_lengths(self, n: int) -> dict[str, int]:
        self.check_length(n)
        lengths = {f"d{j}": n // 2**j for j in range(1, self.levels + 1)}
        lengths[f"a{self.levels}"] = n // self.factor
        return lengths


@dataclass
class BandSet:
    coeffs: dict[str, np.ndarray]
    length: int
    spec: BandSpec = field(default_factory=BandSpec)

    def band(self, name: str) -> np.ndarray:
        """Coefficients of one band stacked as columns ``[T_band, channels]``."""
        keys = self.spec.bands()[name]
        return np.stack([self.coeffs[k] for k in keys], axis=-1)

    def to_json(self) -> dict:
        return {k: [float(v) for v in c] for k, c in self.coeffs.items()}


def _analysis_step(x: np.ndarray, h: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    m = x.shape[0]
    half = m // 2
    g = ((-1.0) ** np.arange(len(h))) * h[::-1]
    base = 2 * np.arange(half) - (len(h) // 2 - 1)
    a = np.zeros((half,) + x.shape[1:])
    d = np.zeros((half,) + x.shape[1:])
    for n in range(len(h)):
        rows = x[(base + n) % m]
        a += h[n] * rows
        d += g[n] * rows
    return a, d


def _synthesis_step(a: np.ndarray, d: np.ndarray, h: np.ndarray) -> np.ndarray:
    half = a.shape[0]
    m = 2 * half
    g = ((-1.0) ** np.arange(len(h))) * h[::-1]
    x = np.zeros((m,) + a.shape[1:])
    base = 2 * np.arange(half) - (len(h) // 2 - 1)
    for n in range(len(h)):
        np.add.at(x, (base + n) % m, h[n] * a + g[n] * d)
    return x


def decompose(x, spec: BandSpec | None = None) -> BandSet:
    """Multilevel DWT of ``x`` along axis 0 (extra axes are transformed independently)."""
    spec = spec or BandSpec()
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    spec.check_length(n)
    if not np.all(np.isfinite(x)):
        raise DecompositionError("input contains non-finite values")
    h = FILTERS[spec.wavelet]
    coeffs: dict[str, np.ndarray] = {}
    a = x
    for j in range(1, spec.levels + 1):
        a, d = _analysis_step(a, h)
        coeffs[f"d{j}"] = d
    coeffs[f"a{spec.levels}"] = a
    return BandSet(coeffs, n, spec)


def reconstruct(b: BandSet) -> np.ndarray:
    """Inverse of :func:`decompose`."""
    spec = b.spec
    expected = spec.coefficient_lengths(b.length)
    for k, m in expected.items():
        if k not in b.coeffs:
            raise DecompositionError(f"missing coefficient sequence {k}")
        if b.coeffs[k].shape[0] != m:
            raise DecompositionError(f"{k} has length {b.coeffs[k].shape[0]}, expected {m}")
    h = FILTERS[spec.wavelet]
    a = np.asarray(b.coeffs[f"a{spec.levels}"], dtype=np.float64)
    for j in range(spec.levels, 0, -1):
        a = _synthesis_step(a, np.asarray(b.coeffs[f"d{j}"], dtype=np.float64), h)
    return a


def band_forecast_lengths(horizon: int, spec: BandSpec | None = None) -> tuple[int, ...]:
    """Coefficient lengths ``(d1, ..., dJ, aJ)`` for a horizon of ``horizon`` steps."""
    spec = spec or BandSpec()
    spec.check_length(horizon, "horizon length")
    return tuple(spec.coefficient_lengths(horizon).values())


@lru_cache(maxsize=64)
def _operator(n: int, levels: int, wavelet: str) -> np.ndarray:
    spec = BandSpec(levels, wavelet)
    eye = np.eye(n)
    bs = decompose(eye, spec)
    return np.concatenate([bs.coeffs[k] for k in spec.coefficient_names()], axis=0)


def analysis_matrix(n: int, spec: BandSpec) -> np.ndarray:
    """Orthonormal matrix ``A`` with coefficients ``A @ x`` ordered d1..dJ, aJ."""
    spec.check_length(n)
    out = _operator(n, spec.levels, spec.wavelet)
    out.flags.writeable = False
    return out


def band_slices(n: int, spec: BandSpec) -> dict[str, slice]:
    """Row slices of :func:`analysis_matrix` belonging to each coefficient name."""
    out, start = {}, 0
    for k, m in spec.coefficient_lengths(n).items():
        out[k] = slice(start, start + m)
        start += m
    return out
