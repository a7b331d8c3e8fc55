"""Great-circle distances, top-k station retrieval and per-band retrieval plans."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .data.core import Station

EARTH_RADIUS_KM = 6371.0
BAND_ORDER = ("fast", "moderate", "slow")


class RetrievalError(ValueError):
    pass


def haversine(a: Station, b: Station) -> float:
    """Great-circle distance in km on a sphere of radius 6371.0 km."""
    return float(haversine_many(a.lat, a.lon, np.array([b.lat]), np.array([b.lon]))[0])


def haversine_many(lat: float, lon: float, lats: np.ndarray, lons: np.ndarray) -> np.ndarray:
    la1, lo1 = np.radians(lat), np.radians(lon)
    la2, lo2 = np.radians(np.asarray(lats, dtype=np.float64)), np.radians(np.asarray(lons, dtype=np.float64))
    h = np.sin((la2 - la1) / 2) ** 2 + np.cos(la1) * np.cos(la2) * np.sin((lo2 - lo1) / 2) ** 2
    return 2.0 * EARTH_RADIUS_KM * np.arcsin(np.sqrt(np.clip(h, 0.0, 1.0)))


def pairwise_haversine(stations: Sequence[Station]) -> np.ndarray:
    lats = np.array([s.lat for s in stations])
    lons = np.array([s.lon for s in stations])
    return np.stack([haversine_many(s.lat, s.lon, lats, lons) for s in stations]) if stations else np.zeros((0, 0))


@dataclass(frozen=True)
class DistanceFn:
    """Symmetric non-negative distance between stations.

    ``kind="embedding_euclidean"`` needs ``embed``, a callable mapping a
    station to a vector (e.g. the model's learned location embedding).
    """

    kind: str = "haversine"
    embed: Callable[[Station], np.ndarray] | None = None

    def __post_init__(self):
        if self.kind not in ("haversine", "embedding_euclidean"):
            raise RetrievalError(f"unknown distance kind {self.kind!r}")
        if self.kind == "embedding_euclidean" and self.embed is None:
            raise RetrievalError("embedding distance needs an embedding provider")

    def __call__(self, a: Station, b: Station) -> float:
        return float(self.to_many(a, [b])[0])

    def to_many(self, target: Station, others: Sequence[Station]) -> np.ndarray:
        if not others:
            return np.zeros(0)
        if self.kind == "haversine":
            return haversine_many(target.lat, target.lon, np.array([s.lat for s in others]),
                                  np.array([s.lon for s in others]))
        q = np.asarray(self.embed(target), dtype=np.float64)
        e = np.stack([np.asarray(self.embed(s), dtype=np.float64) for s in others])
        return np.sqrt(((e - q) ** 2).sum(axis=1))


HAVERSINE = DistanceFn("haversine")


def _registry_list(registry) -> list[Station]:
    if isinstance(registry, Mapping):
        registry = registry.values()
    return sorted(registry, key=lambda s: s.id)


def rank_neighbors(target: Station, registry, d: DistanceFn = HAVERSINE) -> list[tuple[Station, float]]:
    """All registry stations except the target, by ascending distance then id."""
    stations = [s for s in _registry_list(registry) if s.id != target.id]
    dist = d.to_many(target, stations)
    # registry is id-sorted, so a stable sort on distance breaks ties by id
    order = np.argsort(dist, kind="stable")
    return [(stations[i], float(dist[i])) for i in order]


def retrieve(target: Station, registry, k: int, d: DistanceFn = HAVERSINE) -> list[tuple[Station, float]]:
    """The ``k`` nearest stations to ``target`` under ``d``, excluding the target itself."""
    if k < 0:
        raise RetrievalError(f"k must be non-negative, got {k}")
    ranked = rank_neighbors(target, registry, d)
    if k > len(ranked):
        raise RetrievalError(f"requested k={k} neighbours but only {len(ranked)} stations are available")
    return ranked[:k]


@dataclass(frozen=True)
class RetrievalConfig:
    k_fast: int = 10
    k_mod: int = 25
    k_slow: int = 50
    distance: str = "haversine"

    def __post_init__(self):
        if min(self.k_fast, self.k_mod, self.k_slow) < 1:
            raise RetrievalError("band k values must be positive")
        if not self.k_slow > self.k_mod > self.k_fast:
            raise RetrievalError(
                f"need k_slow > k_mod > k_fast, got (fast={self.k_fast}, mod={self.k_mod}, slow={self.k_slow})"
            )

    @property
    def ks(self) -> dict[str, int]:
        return {"fast": self.k_fast, "moderate": self.k_mod, "slow": self.k_slow}


@dataclass
class RetrievalPlan:
    target_id: str
    bands: dict[str, list[tuple[str, float]]] = field(default_factory=dict)

    def ids(self, band: str) -> list[str]:
        return [i for i, _ in self.bands[band]]

    def distances(self, band: str) -> np.ndarray:
        return np.array([d for _, d in self.bands[band]])

    def sizes(self) -> dict[str, int]:
        return {b: len(v) for b, v in self.bands.items()}

    def to_json(self) -> dict:
        return {"target": self.target_id,
                "bands": {b: [{"id": i, "distance_km": d} for i, d in v] for b, v in self.bands.items()}}

    @classmethod
    def from_json(cls, obj: dict) -> "RetrievalPlan":
        return cls(obj["target"], {b: [(e["id"], float(e["distance_km"])) for e in v] for b, v in obj["bands"].items()})

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2)


def plan_retrieval(target: Station, registry, cfg: RetrievalConfig | None = None,
                   distance_fns: Mapping[str, DistanceFn] | None = None) -> RetrievalPlan:
    """Per-band neighbour lists of sizes ``(k_fast, k_mod, k_slow)``.

    With one distance function the lists come from a single ranking, so the
    fast list is a prefix of the moderate list, which is a prefix of the slow
    list. ``distance_fns`` may override the function for individual bands.
    """
    cfg = cfg or RetrievalConfig()
    default = DistanceFn(cfg.distance) if cfg.distance == "haversine" else None
    fns = dict(distance_fns or {})
    if default is None and any(b not in fns for b in BAND_ORDER):
        raise RetrievalError("embedding distance requires distance_fns with an embedding provider")
    cache: dict[int, list[tuple[Station, float]]] = {}
    bands = {}
    for band in BAND_ORDER:
        fn = fns.get(band, default)
        key = id(fn)
        if key not in cache:
            cache[key] = rank_neighbors(target, registry, fn)
        ranked = cache[key]
        k = cfg.ks[band]
        if k > len(ranked):
            raise RetrievalError(f"band {band} needs k={k} neighbours but only {len(ranked)} are available")
        bands[band] = [(s.id, dist) for s, dist in ranked[:k]]
    return RetrievalPlan(target.id, bands)


class StationIndex:
    """Registry with per-target cached rankings (brute-force scan)."""

    def __init__(self, stations: Iterable[Station], d: DistanceFn = HAVERSINE):
        self.stations = {s.id: s for s in stations}
        self.d = d
        self._cache: dict[str, list[tuple[Station, float]]] = {}

    def ranking(self, target: Station) -> list[tuple[Station, float]]:
        if target.id not in self._cache:
            self._cache[target.id] = rank_neighbors(target, self.stations, self.d)
        return self._cache[target.id]

    def retrieve(self, target: Station, k: int) -> list[tuple[Station, float]]:
        ranked = self.ranking(target)
        if k > len(ranked):
            raise RetrievalError(f"requested k={k} neighbours but only {len(ranked)} stations are available")
        return ranked[:k]

    def plan(self, target: Station, cfg: RetrievalConfig) -> RetrievalPlan:
        ranked = self.ranking(target)
        bands = {}
        for band in BAND_ORDER:
            k = cfg.ks[band]
            if k > len(ranked):
                raise RetrievalError(f"band {band} needs k={k} neighbours but only {len(ranked)} are available")
            bands[band] = [(s.id, dist) for s, dist in ranked[:k]]
        return RetrievalPlan(target.id, bands)
