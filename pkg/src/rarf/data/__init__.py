"""Station data: ingestion, synthetic generation, windows and splits."""

from .core import (
    CSV_COLUMNS,
    TARGET,
    VARIABLES,
    DataError,
    Dataset,
    Panel,
    ParseError,
    SeriesWindow,
    SplitSpec,
    Station,
    StationSeries,
    compute_norm_stats,
    fahrenheit_to_kelvin,
    hours_to_iso,
    ingest_csv,
    iso_to_hours,
    kelvin_to_fahrenheit,
    make_windows,
    normalize,
    random_split,
    read_manifest,
    window_anchors,
    write_csv,
    write_manifest,
)
from .synthetic import SynthConfig, generate_components, generate_synthetic

__all__ = [
    "CSV_COLUMNS", "TARGET", "VARIABLES", "DataError", "Dataset", "Panel", "ParseError", "SeriesWindow",
    "SplitSpec", "Station", "StationSeries", "SynthConfig", "compute_norm_stats", "fahrenheit_to_kelvin",
    "generate_components", "generate_synthetic", "hours_to_iso", "ingest_csv", "iso_to_hours",
    "kelvin_to_fahrenheit", "make_windows", "normalize", "random_split", "read_manifest", "window_anchors",
    "write_csv", "write_manifest",
]
