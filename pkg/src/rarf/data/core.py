"""Station registry, CSV ingestion, windowing and train/val/test splits."""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from ..diffcore.rng import SplitMix64

logger = logging.getLogger(__name__)

VARIABLES = ("u10", "v10", "t2m", "d2m", "sp")
TARGET = "t2m"
TEMPERATURE_VARS = ("t2m", "d2m")
CSV_COLUMNS = ("station_id", "lat", "lon", "elevation", "timestamp_iso") + VARIABLES
_EPOCH = datetime(1970, 1, 1, tzinfo=timezone.utc)


class DataError(ValueError):
    pass


class ParseError(DataError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


def kelvin_to_fahrenheit(k):
    return (np.asarray(k, dtype=np.float64) - 273.15) * 1.8 + 32.0


def fahrenheit_to_kelvin(f):
    return (np.asarray(f, dtype=np.float64) - 32.0) / 1.8 + 273.15


def iso_to_hours(stamp: str) -> int:
    s = stamp.strip()
    if s.endswith("Z"):
        s = s[:-1] + "+00:00"
    dt = datetime.fromisoformat(s)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    seconds = (dt - _EPOCH).total_seconds()
    if seconds % 3600:
        raise ValueError(f"timestamp {stamp!r} is not on an hour boundary")
    return int(seconds // 3600)


def hours_to_iso(hours: int) -> str:
    return datetime.fromtimestamp(int(hours) * 3600, tz=timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


@dataclass(frozen=True)
class Station:
    id: str
    lat: float
    lon: float
    elevation: float

    def __post_init__(self):
        if not -90.0 <= self.lat <= 90.0:
            raise DataError(f"station {self.id}: latitude {self.lat} outside [-90, 90]")
        if not -180.0 <= self.lon <= 180.0:
            raise DataError(f"station {self.id}: longitude {self.lon} outside [-180, 180]")
        if not math.isfinite(self.elevation):
            raise DataError(f"station {self.id}: elevation must be finite")


@dataclass
class StationSeries:
    """Hourly table for one station: ``times`` in epoch hours, ``values`` is ``[T, 5]``."""

    times: np.ndarray
    values: np.ndarray

    def __len__(self) -> int:
        return len(self.times)


@dataclass
class SeriesWindow:
    station_id: str
    t0: int
    context: np.ndarray
    horizon: np.ndarray
    variable_names: tuple[str, ...] = VARIABLES

    @property
    def context_len(self) -> int:
        return self.context.shape[0]

    @property
    def horizon_len(self) -> int:
        return self.horizon.shape[0]


@dataclass
class Dataset:
    stations: dict[str, Station] = field(default_factory=dict)
    records: dict[str, StationSeries] = field(default_factory=dict)
    norm_stats: dict[str, tuple[float, float]] = field(default_factory=dict)
    dropped_rows: int = 0

    def __post_init__(self):
        for sid, rec in self.records.items():
            if len(rec.times) > 1 and np.any(np.diff(rec.times) <= 0):
                raise DataError(f"station {sid}: timestamps are not strictly increasing")

    @property
    def station_ids(self) -> list[str]:
        return sorted(self.stations)

    def time_bounds(self) -> tuple[int, int]:
        """Earliest timestamp and one past the latest across all stations."""
        starts = [int(r.times[0]) for r in self.records.values() if len(r)]
        ends = [int(r.times[-1]) for r in self.records.values() if len(r)]
        if not starts:
            return 0, 0
        return min(starts), max(ends) + 1

    def subset(self, ids: Sequence[str]) -> "Dataset":
        return Dataset({i: self.stations[i] for i in ids}, {i: self.records[i] for i in ids}, dict(self.norm_stats))

    def panel(self, ids: Sequence[str] | None = None) -> "Panel":
        return Panel.from_dataset(self, ids)


@dataclass
class Panel:
    """Dense ``[station, hour, variable]`` array on the common hourly grid.

    Missing hours are NaN; ``valid`` marks hours with a complete record.
    """

    ids: list[str]
    start: int
    values: np.ndarray
    valid: np.ndarray

    @classmethod
    def from_dataset(cls, ds: Dataset, ids: Sequence[str] | None = None) -> "Panel":
        ids = list(ids) if ids is not None else ds.station_ids
        start, stop = ds.time_bounds()
        values = np.full((len(ids), stop - start, len(VARIABLES)), np.nan)
        for i, sid in enumerate(ids):
            rec = ds.records[sid]
            values[i, rec.times - start] = rec.values
        return cls(ids, start, values, np.all(np.isfinite(values), axis=-1))

    @property
    def n_hours(self) -> int:
        return self.values.shape[1]

    def index(self, station_id: str) -> int:
        return self.ids.index(station_id)

    def complete(self, rows: np.ndarray, lo: int, hi: int) -> np.ndarray:
        """Whether each station row has complete data on hour offsets ``[lo, hi)``."""
        if lo < 0 or hi > self.n_hours:
            return np.zeros(len(rows), dtype=bool)
        return self.valid[rows, lo:hi].all(axis=1)


# -- ingestion ---------------------------------------------------------------
def _parse_float(text: str, line: int, column: str) -> float | None:
    t = text.strip()
    if t == "" or t.lower() in ("nan", "na", "null"):
        return None
    try:
        return float(t)
    except ValueError:
        raise ParseError(line, f"column {column!r}: cannot parse {text!r} as a number") from None


def ingest_csv(path, schema: Sequence[str] = CSV_COLUMNS) -> Dataset:
    """Read the station CSV; temperatures in Kelvin are stored as Fahrenheit.

    Rows with a missing value are dropped and counted in ``dropped_rows``.
    Malformed rows raise :class:`ParseError`; duplicate ``(station, timestamp)``
    pairs raise :class:`DataError`.
    """
    path = Path(path)
    text = path.read_text()
    if not text.strip():
        return Dataset()
    reader = csv.reader(text.splitlines())
    header = [h.strip() for h in next(reader)]
    missing = [c for c in schema if c not in header]
    if missing:
        raise ParseError(1, f"missing columns {missing}")
    col = {c: header.index(c) for c in schema}
    rows: dict[str, list[tuple[int, list[float]]]] = {}
    meta: dict[str, tuple[float, float, float]] = {}
    seen: set[tuple[str, int]] = set()
    dropped = 0
    for line, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise ParseError(line, f"expected {len(header)} fields, found {len(row)}")
        sid = row[col["station_id"]].strip()
        if not sid:
            raise ParseError(line, "empty station_id")
        try:
            t = iso_to_hours(row[col["timestamp_iso"]])
        except ValueError as exc:
            raise ParseError(line, f"bad timestamp: {exc}") from None
        coords = [_parse_float(row[col[c]], line, c) for c in ("lat", "lon", "elevation")]
        if any(c is None for c in coords):
            raise ParseError(line, "station coordinates must not be empty")
        coords_t = tuple(coords)
        if sid in meta and meta[sid] != coords_t:
            raise ParseError(line, f"station {sid} coordinates changed from {meta[sid]} to {coords_t}")
        meta[sid] = coords_t
        if (sid, t) in seen:
            raise DataError(f"duplicate record for station {sid} at {hours_to_iso(t)} (line {line})")
        seen.add((sid, t))
        vals = [_parse_float(row[col[v]], line, v) for v in VARIABLES]
        if any(v is None or not math.isfinite(v) for v in vals):
            dropped += 1
            continue
        rows.setdefault(sid, []).append((t, vals))
    stations, records = {}, {}
    temp_idx = [VARIABLES.index(v) for v in TEMPERATURE_VARS]
    for sid in sorted(meta):
        lat, lon, elev = meta[sid]
        stations[sid] = Station(sid, lat, lon, elev)
        entries = sorted(rows.get(sid, []))
        times = np.array([e[0] for e in entries], dtype=np.int64)
        values = np.array([e[1] for e in entries], dtype=np.float64).reshape(len(entries), len(VARIABLES))
        values[:, temp_idx] = kelvin_to_fahrenheit(values[:, temp_idx])
        records[sid] = StationSeries(times, values)
    if dropped:
        logger.info("dropped %d rows with missing values from %s", dropped, path)
    return Dataset(stations, records, dropped_rows=dropped)


def write_csv(ds: Dataset, path, ids: Sequence[str] | None = None) -> None:
    """Inverse of :func:`ingest_csv` (temperatures written back in Kelvin)."""
    temp_idx = [VARIABLES.index(v) for v in TEMPERATURE_VARS]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_COLUMNS)
        for sid in ids if ids is not None else ds.station_ids:
            st = ds.stations[sid]
            rec = ds.records[sid]
            vals = rec.values.copy()
            vals[:, temp_idx] = fahrenheit_to_kelvin(vals[:, temp_idx])
            for t, row in zip(rec.times, vals):
                w.writerow([sid, repr(st.lat), repr(st.lon), repr(st.elevation), hours_to_iso(t)]
                           + [repr(float(v)) for v in row])


def write_manifest(ds: Dataset, directory) -> Path:
    """Write one CSV per station plus ``manifest.json`` describing the registry."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    entries = []
    for sid in ds.station_ids:
        st = ds.stations[sid]
        fname = f"station_{sid}.csv"
        write_csv(ds, directory / fname, [sid])
        entries.append({"id": sid, "lat": st.lat, "lon": st.lon, "elevation": st.elevation, "csv": fname})
    manifest = {"variables": list(VARIABLES), "stations": entries,
                "norm_stats": {k: list(v) for k, v in ds.norm_stats.items()}}
    path = directory / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2))
    return path


def read_manifest(path) -> Dataset:
    path = Path(path)
    manifest = json.loads(path.read_text())
    stations, records, dropped = {}, {}, 0
    for entry in manifest["stations"]:
        part = ingest_csv(path.parent / entry["csv"])
        sid = entry["id"]
        stations[sid] = Station(sid, float(entry["lat"]), float(entry["lon"]), float(entry["elevation"]))
        records[sid] = part.records.get(sid, StationSeries(np.zeros(0, np.int64), np.zeros((0, len(VARIABLES)))))
        dropped += part.dropped_rows
    norm = {k: (float(v[0]), float(v[1])) for k, v in manifest.get("norm_stats", {}).items()}
    return Dataset(stations, records, norm, dropped)


# -- splits and normalisation ------------------------------------------------
@dataclass
class SplitSpec:
    train_station_ids: list[str]
    val_station_ids: list[str]
    test_station_ids: list[str]
    fractions: tuple[float, float, float] = (0.7, 0.1, 0.2)

    def __post_init__(self):
        sets = [set(self.train_station_ids), set(self.val_station_ids), set(self.test_station_ids)]
        if sets[0] & sets[1] or sets[0] & sets[2] or sets[1] & sets[2]:
            raise DataError("train/val/test station sets must be disjoint")
        if abs(sum(self.fractions) - 1.0) > 1e-9 or min(self.fractions) < 0:
            raise DataError(f"temporal fractions must be non-negative and sum to 1, got {self.fractions}")

    def periods(self, ds: Dataset) -> dict[str, tuple[int, int]]:
        """Epoch-hour ``[start, stop)`` of the train/val/test periods."""
        start, stop = ds.time_bounds()
        n = stop - start
        a = start + int(round(self.fractions[0] * n))
        b = start + int(round((self.fractions[0] + self.fractions[1]) * n))
        return {"train": (start, a), "val": (a, b), "test": (b, stop)}

    def to_json(self) -> dict:
        return {"train": self.train_station_ids, "val": self.val_station_ids, "test": self.test_station_ids,
                "fractions": list(self.fractions)}


def random_split(ds: Dataset, n_val: int, n_test: int, seed: int,
                 fractions: tuple[float, float, float] = (0.7, 0.1, 0.2)) -> SplitSpec:
    ids = ds.station_ids
    if n_val + n_test >= len(ids):
        raise DataError(f"cannot hold out {n_val + n_test} of {len(ids)} stations")
    order = [ids[i] for i in SplitMix64(seed).permutation(len(ids))]
    test = sorted(order[:n_test])
    val = sorted(order[n_test:n_test + n_val])
    train = sorted(order[n_test + n_val:])
    return SplitSpec(train, val, test, fractions)


def compute_norm_stats(ds: Dataset, split: SplitSpec) -> dict[str, tuple[float, float]]:
    """Per-variable mean/std over train stations within the train period."""
    lo, hi = split.periods(ds)["train"]
    chunks = []
    for sid in split.train_station_ids:
        rec = ds.records[sid]
        mask = (rec.times >= lo) & (rec.times < hi)
        chunks.append(rec.values[mask])
    allv = np.concatenate(chunks) if chunks else np.zeros((0, len(VARIABLES)))
    if len(allv) < 2:
        raise DataError("not enough training rows to compute normalisation statistics")
    stats = {}
    for j, v in enumerate(VARIABLES):
        mu, sd = float(allv[:, j].mean()), float(allv[:, j].std())
        if not (math.isfinite(mu) and math.isfinite(sd) and sd > 0):
            raise DataError(f"degenerate normalisation statistics for {v}: mean={mu} std={sd}")
        stats[v] = (mu, sd)
    return stats


def normalize(values: np.ndarray, stats: dict[str, tuple[float, float]]) -> np.ndarray:
    mu = np.array([stats[v][0] for v in VARIABLES])
    sd = np.array([stats[v][1] for v in VARIABLES])
    return (values - mu) / sd


# -- windows -----------------------------------------------------------------
def window_anchors(times: np.ndarray, context_len: int, horizon_len: int, stride: int,
                   time_range: tuple[int, int] | None = None) -> np.ndarray:
    """Anchors ``t0`` (last context hour) whose full span is present.

    Candidates lie on the grid ``times[0] + context_len - 1 + m * stride``; a
    window needs every hour in ``[t0 - context_len + 1, t0 + horizon_len]``.
    """
    if context_len < 0 or horizon_len < 1 or stride < 1:
        raise DataError("need context_len >= 0, horizon_len >= 1, stride >= 1")
    if len(times) == 0:
        return np.zeros(0, dtype=np.int64)
    span = context_len + horizon_len
    first, last = int(times[0]), int(times[-1])
    lo, hi = first, last + 1
    if time_range is not None:
        lo, hi = max(lo, time_range[0]), min(hi, time_range[1])
    cand = np.arange(first + context_len - 1, last - horizon_len + 1, stride, dtype=np.int64)
    cand = cand[(cand - context_len + 1 >= lo) & (cand + horizon_len < hi)]
    if len(cand) == 0:
        return cand
    # contiguous iff the index distance equals the time distance
    pos_start = np.searchsorted(times, cand - context_len + 1)
    pos_end = np.searchsorted(times, cand + horizon_len)
    ok = (pos_end < len(times)) & (pos_start < len(times))
    pe = np.minimum(pos_end, len(times) - 1)
    ps = np.minimum(pos_start, len(times) - 1)
    ok &= (times[ps] == cand - context_len + 1) & (times[pe] == cand + horizon_len) & (pe - ps == span - 1)
    return cand[ok]


def make_windows(ds: Dataset, context_len: int, horizon_len: int, stride: int = 1,
                 station_ids: Sequence[str] | None = None,
                 time_range: tuple[int, int] | None = None) -> Iterator[SeriesWindow]:
    """Yield windows per station; inputs z-scored, target in physical units."""
    if ds.norm_stats:
        stats = ds.norm_stats
    else:
        stats = {v: (0.0, 1.0) for v in VARIABLES}
    tcol = VARIABLES.index(TARGET)
    for sid in station_ids if station_ids is not None else ds.station_ids:
        rec = ds.records[sid]
        if len(rec) == 0:
            continue
        normed = normalize(rec.values, stats)
        for t0 in window_anchors(rec.times, context_len, horizon_len, stride, time_range):
            i = int(np.searchsorted(rec.times, t0 + 1))
            yield SeriesWindow(sid, int(t0), normed[i - context_len:i].copy(),
                               rec.values[i:i + horizon_len, tcol].copy())
