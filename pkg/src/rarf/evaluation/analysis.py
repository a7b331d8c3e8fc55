"""Band correlation versus distance."""

from __future__ import annotations

import csv
import io

import numpy as np

from ..data.core import TARGET, VARIABLES, Dataset
from ..diffcore import SplitMix64
from ..multires import BandSpec, decompose
from ..retrieval import haversine

MIN_OVERLAP = 64


def _band_series(x: np.ndarray, spec: BandSpec) -> dict[str, np.ndarray]:
    n = x.shape[0] - x.shape[0] % spec.factor
    bs = decompose(x[:n], spec)
    return {name: np.concatenate([bs.coeffs[c] for c in coeffs]) for name, coeffs in spec.bands().items()}


def pearson(a: np.ndarray, b: np.ndarray) -> float:
    a = a - a.mean()
    b = b - b.mean()
    den = np.sqrt((a * a).sum() * (b * b).sum())
    return float((a * b).sum() / den) if den > 0 else float("nan")


def corr_vs_distance(ds: Dataset, spec: BandSpec | None = None, n_pairs: int = 200, seed: int = 0,
                     pairs: list[tuple[str, str]] | None = None) -> list[dict]:
    """Rows ``{a, b, distance_km, band, r}`` for sampled station pairs.

    Each pair uses the hours both stations observe (longest common run);
    pairs with fewer than 64 shared hours are skipped.
    """
    spec = spec or BandSpec()
    ids = ds.station_ids
    if len(ids) < 2 and not pairs:
        raise ValueError("need at least two stations")
    if pairs is None:
        rng = SplitMix64(seed)
        pairs = []
        n = len(ids)
        total = n * (n - 1) // 2
        if n_pairs >= total:
            pairs = [(ids[i], ids[j]) for i in range(n) for j in range(i + 1, n)]
        else:
            seen = set()
            while len(pairs) < n_pairs:
                i, j = (int(v) for v in rng.integers(n, 2))
                if i == j or (min(i, j), max(i, j)) in seen:
                    continue
                seen.add((min(i, j), max(i, j)))
                pairs.append((ids[min(i, j)], ids[max(i, j)]))
    col = VARIABLES.index(TARGET)
    rows = []
    for a, b in pairs:
        ra, rb = ds.records[a], ds.records[b]
        common, ia, ib = np.intersect1d(ra.times, rb.times, return_indices=True)
        if len(common) < MIN_OVERLAP:
            continue
        # longest contiguous run of shared hours
        breaks = np.flatnonzero(np.diff(common) != 1)
        starts = np.r_[0, breaks + 1]
        ends = np.r_[breaks + 1, len(common)]
        k = int(np.argmax(ends - starts))
        s, e = starts[k], ends[k]
        if e - s < MIN_OVERLAP:
            continue
        xa = ra.values[ia[s:e], col]
        xb = rb.values[ib[s:e], col]
        ba, bb = _band_series(xa, spec), _band_series(xb, spec)
        d = haversine(ds.stations[a], ds.stations[b])
        for band in spec.band_names():
            rows.append({"a": a, "b": b, "distance_km": d, "band": band, "r": pearson(ba[band], bb[band])})
    return rows


def rows_to_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["a", "b", "distance_km", "band", "r"])
    for r in rows:
        w.writerow([r["a"], r["b"], f"{r['distance_km']:.6f}", r["band"], f"{r['r']:.9f}"])
    return buf.getvalue()


def binned_correlation(rows: list[dict], band: str, bin_km: float = 10.0) -> tuple[np.ndarray, np.ndarray]:
    """Mean distance and mean correlation per nonempty distance bin."""
    sel = [(r["distance_km"], r["r"]) for r in rows if r["band"] == band and np.isfinite(r["r"])]
    if not sel:
        return np.zeros(0), np.zeros(0)
    d = np.array([s[0] for s in sel])
    r = np.array([s[1] for s in sel])
    bins = np.floor(d / bin_km).astype(int)
    ub = np.unique(bins)
    return np.array([d[bins == b].mean() for b in ub]), np.array([r[bins == b].mean() for b in ub])


def decorrelation_distance(rows: list[dict], band: str, threshold: float = 0.5, bin_km: float = 10.0) -> float:
    """Distance where binned mean correlation first drops below ``threshold``.

    Linear interpolation between bin means, starting from r = 1 at 0 km.
    Returns ``inf`` when no bin drops below (the crossing lies beyond the
    largest sampled distance) and ``nan`` without data.
    """
    d, r = binned_correlation(rows, band, bin_km)
    if not len(d):
        return float("nan")
    d = np.r_[0.0, d]
    r = np.r_[1.0, r]
    below = np.flatnonzero(r < threshold)
    if not len(below):
        return float("inf")
    i = below[0]
    return float(d[i - 1] + (r[i - 1] - threshold) * (d[i] - d[i - 1]) / (r[i - 1] - r[i]))
