"""Run configuration: a flat INI file with one section per component type.

Example::

    [run]
    seed = 0

    [data]
    source = synthetic          ; or manifest / csv with path = ...

    [SynthConfig]
    grid = 9, 9

    [SplitSpec]
    n_val = 9
    n_test = 8

    [RetrievalConfig]
    k_fast = 10

    [ModelConfig]
    transfer = fc

    [TrainConfig]
    epochs = 12

Unknown sections or keys are rejected before any work is done. Tuple
values are comma separated; nested tuples use JSON (``[[16, 240], [4.5, 9]]``).
"""

from __future__ import annotations

import configparser
import hashlib
import json
import typing
from dataclasses import MISSING, asdict, dataclass, field, fields, replace
from pathlib import Path

from .data import SynthConfig
from .forecaster import ModelConfig
from .multires import BandSpec
from .retrieval import RetrievalConfig
from .training import TrainConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class DataSource:
    source: str = "synthetic"
    path: str = ""

    def __post_init__(self):
        if self.source not in ("synthetic", "manifest", "csv"):
            raise ConfigError(f"data.source must be synthetic, manifest or csv, got {self.source!r}")
        if self.source != "synthetic" and not self.path:
            raise ConfigError(f"data.source = {self.source} needs data.path")


@dataclass(frozen=True)
class SplitParams:
    n_val: int = 9
    n_test: int = 8
    fractions: tuple[float, float, float] = (0.7, 0.1, 0.2)


@dataclass(frozen=True)
class RunParams:
    seed: int = 0
    eval_stride: int = 12


# model fields filled from the data rather than the file
_DERIVED_MODEL = ("loc_center", "loc_scale", "seed")

SECTIONS = {
    "run": RunParams,
    "data": DataSource,
    "SynthConfig": SynthConfig,
    "SplitSpec": SplitParams,
    "BandSpec": BandSpec,
    "RetrievalConfig": RetrievalConfig,
    "ModelConfig": ModelConfig,
    "TrainConfig": TrainConfig,
}


@dataclass
class RunConfig:
    run: RunParams = field(default_factory=RunParams)
    data: DataSource = field(default_factory=DataSource)
    synth: SynthConfig = field(default_factory=SynthConfig)
    split: SplitParams = field(default_factory=SplitParams)
    bands: BandSpec = field(default_factory=BandSpec)
    retrieval: RetrievalConfig = field(default_factory=RetrievalConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)

    @property
    def seed(self) -> int:
        return self.run.seed

    def to_json(self) -> dict:
        def plain(obj):
            d = asdict(obj)
            return json.loads(json.dumps(d))
        model = plain(self.model)
        for k in _DERIVED_MODEL:
            model.pop(k, None)
        return {"run": plain(self.run), "data": plain(self.data), "SynthConfig": plain(self.synth),
                "SplitSpec": plain(self.split), "BandSpec": plain(self.bands),
                "RetrievalConfig": plain(self.retrieval), "ModelConfig": model,
                "TrainConfig": self.train.to_json()}

    def digest(self) -> str:
        raw = json.dumps(self.to_json(), sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(raw).hexdigest()

    def with_seed(self, seed: int) -> "RunConfig":
        """Same configuration with every seed replaced by ``seed``."""
        return RunConfig(replace(self.run, seed=seed), self.data, replace(self.synth, seed=seed), self.split,
                         self.bands, self.retrieval, replace(self.model, seed=seed), replace(self.train, seed=seed))


def _convert(raw: str, kind, where: str):
    origin = typing.get_origin(kind)
    try:
        if kind is bool:
            low = raw.strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
        if kind is str:
            return raw.strip()
        if origin is tuple:
            text = raw.strip()
            if text.startswith("["):
                val = json.loads(text)
            else:
                val = [v.strip() for v in text.split(",") if v.strip()]
            args = typing.get_args(kind)
            inner = args[0] if args else float

            def to_tuple(v, t):
                if isinstance(v, list):
                    sub = typing.get_args(t)
                    return tuple(to_tuple(x, sub[0] if sub else float) for x in v)
                return _convert(str(v), t, where)
            return tuple(to_tuple(v, inner) for v in val)
    except (ValueError, json.JSONDecodeError) as exc:
        raise ConfigError(f"{where}: cannot parse {raw!r} as {getattr(kind, '__name__', kind)}") from exc
    raise ConfigError(f"{where}: unsupported field type {kind}")


def _section_values(cp: configparser.ConfigParser, name: str, cls) -> dict:
    if not cp.has_section(name):
        return {}
    hints = typing.get_type_hints(cls)
    known = {f.name for f in fields(cls)}
    if cls is ModelConfig:
        known -= set(_DERIVED_MODEL)
    out = {}
    for key, raw in cp.items(name):
        if key not in known:
            raise ConfigError(f"[{name}] unknown key {key!r}; expected one of {sorted(known)}")
        out[key] = _convert(raw, hints[key], f"[{name}] {key}")
    return out


def _build(cls, values: dict, section: str):
    try:
        return cls(**values)
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"[{section}] {exc}") from exc


def parse_config(text: str) -> RunConfig:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {str(exc).splitlines()[0]}") from exc
    unknown = [s for s in cp.sections() if s not in SECTIONS]
    if unknown:
        raise ConfigError(f"unknown section(s) {unknown}; expected {sorted(SECTIONS)}")
    vals = {name: _section_values(cp, name, cls) for name, cls in SECTIONS.items()}
    run = _build(RunParams, vals["run"], "run")
    seed = run.seed
    synth = _build(SynthConfig, {"seed": seed, **vals["SynthConfig"]}, "SynthConfig")
    bands = _build(BandSpec, vals["BandSpec"], "BandSpec")
    retrieval = _build(RetrievalConfig, vals["RetrievalConfig"], "RetrievalConfig")
    mv = dict(vals["ModelConfig"])
    if "BandSpec" in cp:
        for k in ("levels", "wavelet"):
            if k in mv and mv[k] != getattr(bands, k):
                raise ConfigError(f"[ModelConfig] {k}={mv[k]} conflicts with [BandSpec] {k}={getattr(bands, k)}")
        mv.setdefault("levels", bands.levels)
        mv.setdefault("wavelet", bands.wavelet)
    if mv.get("levels", ModelConfig.levels) == 3 and "band_ks" not in mv:
        mv["band_ks"] = (retrieval.k_fast, retrieval.k_mod, retrieval.k_slow)
    model = _build(ModelConfig, {"seed": seed, **mv}, "ModelConfig")
    train = _build(TrainConfig, {"seed": seed, **vals["TrainConfig"]}, "TrainConfig")
    return RunConfig(run, _build(DataSource, vals["data"], "data"), synth,
                     _build(SplitParams, vals["SplitSpec"], "SplitSpec"), bands, retrieval, model, train)


def load_config(path) -> RunConfig:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    return parse_config(p.read_text())


def default_text() -> str:
    """A complete config with every default spelled out."""
    cfg = RunConfig()
    lines = []
    for section, values in cfg.to_json().items():
        lines.append(f"[{section}]")
        for k, v in values.items():
            if isinstance(v, list):
                flat = all(not isinstance(x, list) for x in v)
                v = ", ".join(str(x) for x in v) if flat else json.dumps(v)
            elif isinstance(v, bool):
                v = "true" if v else "false"
            lines.append(f"{k} = {v}")
        lines.append("")
    return "\n".join(lines)


def field_default(cls, name: str):
    f = {f.name: f for f in fields(cls)}[name]
    return f.default if f.default is not MISSING else f.default_factory()
