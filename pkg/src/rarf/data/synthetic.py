"""Synthetic station networks with frequency-dependent spatial correlation.

Temperature is the sum of a location-dependent climatology, a diurnal cycle,
three band components and white measurement noise. Band ``b`` is built from
independent band-limited temporal processes (white noise masked to the band's
period range in the Fourier domain) mixed across stations by the Cholesky
factor of a squared-exponential kernel with length-scale ``rho_b``. The
spatial correlation of band ``b`` at distance ``d`` is therefore
``exp(-d^2 / (2 rho_b^2))`` by construction.

Optionally the whole pattern drifts eastward: each station sees the field
delayed by ``x_east / advection_kmh`` hours, applied as an exact Fourier phase
shift. Upwind stations then carry information about a target's future.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..diffcore.rng import SplitMix64, derive_seed
from .core import VARIABLES, Dataset, DataError, Station, StationSeries, iso_to_hours

EARTH_RADIUS_KM = 6371.0
BANDS = ("slow", "moderate", "fast")


@dataclass(frozen=True)
class SynthConfig:
    grid: tuple[int, int] = (9, 9)
    bbox: tuple[float, float, float, float] = (45.0, 48.0, -124.0, -119.5)
    jitter: float = 0.35
    length_scales_km: tuple[float, float, float] = (500.0, 100.0, 25.0)
    periods_h: tuple[tuple[float, float], ...] = ((16.0, 240.0), (4.5, 9.0), (2.0, 4.0))
    amplitudes: tuple[float, float, float] = (7.0, 2.5, 1.5)
    diurnal_amplitude: float = 7.0
    noise_std: float = 0.5
    advection_kmh: float = 5.0
    n_hours: int = 8760
    start: str = "2020-01-01T00:00:00Z"
    seed: int = 0

    def __post_init__(self):
        slow, mod, fast = self.length_scales_km
        if not slow > mod > fast > 0:
            raise DataError(
                f"length-scales must satisfy slow > moderate > fast > 0, got {self.length_scales_km}"
            )
        if len(self.periods_h) != 3 or any(not 1.0 < lo < hi for lo, hi in self.periods_h):
            raise DataError(f"each band needs a period range (lo, hi) with 1 < lo < hi, got {self.periods_h}")
        lat0, lat1, lon0, lon1 = self.bbox
        if not (-90 <= lat0 < lat1 <= 90 and -180 <= lon0 < lon1 <= 180):
            raise DataError(f"invalid bounding box {self.bbox}")
        if min(self.grid) < 1 or self.n_hours < 2:
            raise DataError("grid dims and n_hours must be positive")
        if self.noise_std < 0 or self.advection_kmh < 0:
            raise DataError("noise_std and advection_kmh must be non-negative")

    @property
    def n_stations(self) -> int:
        return self.grid[0] * self.grid[1]


def local_xy_km(lat: np.ndarray, lon: np.ndarray, lat0: float, lon0: float) -> tuple[np.ndarray, np.ndarray]:
    """Equirectangular east/north offsets in km from ``(lat0, lon0)``."""
    k = np.pi / 180.0 * EARTH_RADIUS_KM
    x = (lon - lon0) * k * np.cos(np.radians(0.5 * (lat + lat0)))
    y = (lat - lat0) * k
    return x, y


def _pairwise_haversine(lat: np.ndarray, lon: np.ndarray) -> np.ndarray:
    la, lo = np.radians(lat), np.radians(lon)
    dlat = la[:, None] - la[None, :]
    dlon = lo[:, None] - lo[None, :]
    a = np.sin(dlat / 2) ** 2 + np.cos(la)[:, None] * np.cos(la)[None, :] * np.sin(dlon / 2) ** 2
    return 2.0 * EARTH_RADIUS_KM * np.arcsin(np.sqrt(np.clip(a, 0.0, 1.0)))


def se_cholesky(dist_km: np.ndarray, length_km: float, nugget: float = 1e-8) -> np.ndarray:
    """Cholesky factor of ``exp(-d^2 / 2 rho^2)`` with a small diagonal nugget."""
    k = np.exp(-0.5 * (dist_km / length_km) ** 2)
    k[np.diag_indices_from(k)] += nugget
    return np.linalg.cholesky(k)


def band_limited_noise(rng: SplitMix64, n_series: int, n_hours: int, period_range: tuple[float, float]) -> np.ndarray:
    """Spectra ``[n_series, n_hours//2 + 1]`` of unit-variance processes limited to the period range."""
    freqs = np.fft.rfftfreq(n_hours, d=1.0)
    lo, hi = 1.0 / period_range[1], 1.0 / period_range[0]
    mask = (freqs >= lo) & (freqs <= hi) & (freqs < 0.5)
    if not mask.any():
        raise DataError(f"period range {period_range} holds no Fourier frequency for {n_hours} hours")
    spec = (rng.normal((n_series, len(freqs))) + 1j * rng.normal((n_series, len(freqs)))) * mask
    # unit variance in the time domain: sum over the one-sided spectrum
    power = 2.0 * mask.sum() / n_hours**2
    return spec / np.sqrt(power * 2.0)


def _shift_and_invert(spectra: np.ndarray, delays_h: np.ndarray, n_hours: int) -> np.ndarray:
    freqs = np.fft.rfftfreq(n_hours, d=1.0)
    phase = np.exp(-2j * np.pi * freqs[None, :] * delays_h[:, None])
    return np.fft.irfft(spectra * phase, n=n_hours, axis=1)


def _smooth_field(rng: SplitMix64, dist_km: np.ndarray, length_km: float) -> np.ndarray:
    return se_cholesky(dist_km, length_km) @ rng.normal((dist_km.shape[0],))


def station_layout(cfg: SynthConfig) -> list[tuple[str, float, float]]:
    rng = SplitMix64(derive_seed(cfg.seed, "layout"))
    nr, nc = cfg.grid
    lat0, lat1, lon0, lon1 = cfg.bbox
    dlat, dlon = (lat1 - lat0) / nr, (lon1 - lon0) / nc
    jit = rng.uniform((nr * nc, 2), -cfg.jitter, cfg.jitter)
    out = []
    for r in range(nr):
        for c in range(nc):
            i = r * nc + c
            lat = lat0 + (r + 0.5 + jit[i, 0]) * dlat
            lon = lon0 + (c + 0.5 + jit[i, 1]) * dlon
            out.append((f"ST{i:03d}", float(lat), float(lon)))
    return out


def generate_components(cfg: SynthConfig) -> tuple[list[Station], dict[str, np.ndarray], np.ndarray]:
    """Stations, per-band temperature components ``[n_st, n_hours]`` and the pairwise distances."""
    layout = station_layout(cfg)
    lat = np.array([p[1] for p in layout])
    lon = np.array([p[2] for p in layout])
    dist = _pairwise_haversine(lat, lon)
    rng_elev = SplitMix64(derive_seed(cfg.seed, "elevation"))
    elev = np.clip(700.0 + 450.0 * _smooth_field(rng_elev, dist, 120.0), 0.0, None)
    stations = [Station(sid, la, lo, float(round(e, 3))) for (sid, la, lo), e in zip(layout, elev)]

    x_east, _ = local_xy_km(lat, lon, cfg.bbox[0], cfg.bbox[2])
    delays = x_east / cfg.advection_kmh if cfg.advection_kmh > 0 else np.zeros(len(lat))
    comps = {}
    for b, name in enumerate(BANDS):
        rng = SplitMix64(derive_seed(cfg.seed, f"band:{name}"))
        chol = se_cholesky(dist, cfg.length_scales_km[b])
        spectra = band_limited_noise(rng, len(lat), cfg.n_hours, cfg.periods_h[b])
        comps[name] = cfg.amplitudes[b] * _shift_and_invert(chol @ spectra, delays, cfg.n_hours)
    return stations, comps, dist


def generate_synthetic(cfg: SynthConfig | None = None) -> Dataset:
    """Deterministic synthetic dataset for ``cfg`` (temperatures in Fahrenheit)."""
    cfg = cfg or SynthConfig()
    stations, comps, dist = generate_components(cfg)
    n_st, n_h = len(stations), cfg.n_hours
    lat = np.array([s.lat for s in stations])
    lon = np.array([s.lon for s in stations])
    elev = np.array([s.elevation for s in stations])
    t0 = iso_to_hours(cfg.start)
    hours = t0 + np.arange(n_h)

    rng = SplitMix64(derive_seed(cfg.seed, "aux"))
    amp_field = 1.0 + 0.25 * _smooth_field(rng, dist, 150.0)
    local_hour = (hours[None, :] % 24) + lon[:, None] / 15.0
    diurnal = cfg.diurnal_amplitude * amp_field[:, None] * np.cos(2 * np.pi * (local_hour - 15.0) / 24.0)
    climatology = 52.0 - 11.7e-3 * elev - 1.2 * (lat - 46.0)
    t2m = climatology[:, None] + diurnal + comps["slow"] + comps["moderate"] + comps["fast"]
    t2m = t2m + cfg.noise_std * rng.normal((n_st, n_h))

    # auxiliary variables: slow independent drivers mixed on the slow length-scale
    chol_slow = se_cholesky(dist, cfg.length_scales_km[0])
    aux = chol_slow @ np.fft.irfft(band_limited_noise(rng, n_st, n_h, cfg.periods_h[0]), n=n_h, axis=1)
    aux2 = chol_slow @ np.fft.irfft(band_limited_noise(rng, n_st, n_h, cfg.periods_h[0]), n=n_h, axis=1)
    depression = np.clip(7.0 + 0.35 * diurnal + 2.5 * aux, 0.0, None)
    d2m = t2m - depression + 0.3 * rng.normal((n_st, n_h))
    sp = (101325.0 * np.exp(-elev / 8400.0))[:, None] - 60.0 * comps["slow"] + 250.0 * aux2
    sp = sp + 15.0 * rng.normal((n_st, n_h))
    u10 = cfg.advection_kmh / 3.6 * 0.6 + 2.0 * aux2 + 0.8 * rng.normal((n_st, n_h))
    v10 = 2.0 * aux + 0.8 * rng.normal((n_st, n_h))

    stacked = np.stack([u10, v10, t2m, d2m, sp], axis=-1)
    assert stacked.shape[-1] == len(VARIABLES)
    return Dataset(
        {s.id: s for s in stations},
        {s.id: StationSeries(hours.astype(np.int64), stacked[i].copy()) for i, s in enumerate(stations)},
    )
