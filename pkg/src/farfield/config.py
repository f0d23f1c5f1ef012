"""Pipeline configuration: a TOML document with one table per module.

Every key is optional and defaults to the module default; unknown tables
or keys are rejected. ``FARFIELD_CONFIG`` names a default config file.
"""

from __future__ import annotations

import os
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import tomli

from .enhance.training import TrainConfig
from .errors import ConfigurationError
from .features import PairSelection, default_pairs
from .geometry import ArrayGeometry, Topology, build_array
from .roomsim import RirConfig, SamplerBounds
from .spectral import StftConfig

CONFIG_ENV = "FARFIELD_CONFIG"

_ROOMSIM_BOUNDS = {f.name for f in fields(SamplerBounds)}
_ROOMSIM_RIR = {f.name for f in fields(RirConfig)}


@dataclass
class GeometrySection:
    topology: str = "linear_uniform8"
    params: dict = field(default_factory=dict)

    def build(self) -> ArrayGeometry:
        return build_array(self.topology, **self.params)


@dataclass
class MixerSection:
    snr_range: tuple = (0.0, 30.0)
    clip_seconds: float = 6.0
    target: str = "reverberant"
    ref_channel: int = 0
    sample_rate: int = 16000


@dataclass
class FeaturesSection:
    channel_subset: list | None = None  # 1-based, as printed
    pairs: list | None = None  # 1-based positions within the subset

    def selection(self, topology) -> PairSelection:
        if self.channel_subset is None and self.pairs is None:
            return default_pairs(topology)
        base = default_pairs(topology)
        subset = tuple(c - 1 for c in self.channel_subset) if self.channel_subset else base.channel_subset
        pairs = tuple((a - 1, b - 1) for a, b in self.pairs) if self.pairs else base.pairs
        return PairSelection(subset, pairs)


@dataclass
class ModelSection:
    hidden: int = 512
    layers: int = 3
    bound: float = 10.0
    seed: int = 0


@dataclass
class EvaluateSection:
    pesq_executable: str | None = None
    rtf_repetitions: int = 3


@dataclass
class PipelineConfig:
    geometry: GeometrySection = field(default_factory=GeometrySection)
    roomsim: dict = field(default_factory=dict)
    mixer: MixerSection = field(default_factory=MixerSection)
    stft: dict = field(default_factory=dict)
    features: FeaturesSection = field(default_factory=FeaturesSection)
    model: ModelSection = field(default_factory=ModelSection)
    train: TrainConfig = field(default_factory=TrainConfig)
    evaluate: EvaluateSection = field(default_factory=EvaluateSection)

    # -- derived module configs
    def sampler_bounds(self) -> SamplerBounds:
        doc = {k: tuple(v) if isinstance(v, list) else v for k, v in self.roomsim.items() if k in _ROOMSIM_BOUNDS}
        bounds = SamplerBounds(**doc)
        bounds.validate()
        return bounds

    def rir_config(self) -> RirConfig:
        return RirConfig(**{k: v for k, v in self.roomsim.items() if k in _ROOMSIM_RIR})

    def stft_config(self) -> StftConfig:
        return StftConfig(**self.stft)

    def selection(self) -> PairSelection:
        return self.features.selection(self.geometry.topology)

    def to_dict(self) -> dict:
        doc = asdict(self)
        doc["mixer"]["snr_range"] = list(doc["mixer"]["snr_range"])
        return doc

    def override(self, section: str, **values) -> "PipelineConfig":
        """Copy with non-``None`` ``values`` written into ``section``."""
        values = {k: v for k, v in values.items() if v is not None}
        if not values:
            return self
        current = getattr(self, section)
        if isinstance(current, dict):
            return replace(self, **{section: {**current, **values}})
        return replace(self, **{section: replace(current, **values)})


_SECTIONS = {
    "geometry": GeometrySection,
    "mixer": MixerSection,
    "features": FeaturesSection,
    "model": ModelSection,
    "train": TrainConfig,
    "evaluate": EvaluateSection,
}


def _check_keys(section: str, doc: dict, allowed) -> None:
    unknown = sorted(set(doc) - set(allowed))
    if unknown:
        raise ConfigurationError(f"[{section}] unknown keys: {', '.join(unknown)}")


def from_dict(doc: dict) -> PipelineConfig:
    _check_keys("top level", doc, [f.name for f in fields(PipelineConfig)])
    kwargs = {}
    for name, cls in _SECTIONS.items():
        section = doc.get(name, {})
        if not isinstance(section, dict):
            raise ConfigurationError(f"[{name}] must be a table")
        _check_keys(name, section, [f.name for f in fields(cls)])
        kwargs[name] = cls(**section)
    roomsim = dict(doc.get("roomsim", {}))
    _check_keys("roomsim", roomsim, _ROOMSIM_BOUNDS | _ROOMSIM_RIR)
    stft_doc = dict(doc.get("stft", {}))
    _check_keys("stft", stft_doc, [f.name for f in fields(StftConfig)])
    cfg = PipelineConfig(roomsim=roomsim, stft=stft_doc, **kwargs)
    try:
        Topology.parse(cfg.geometry.topology)
        cfg.sampler_bounds()
        cfg.rir_config()
        cfg.stft_config()
        cfg.train.validate()
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(str(exc)) from exc
    return cfg


def load_config(path=None) -> PipelineConfig:
    """Read ``path``, else ``$FARFIELD_CONFIG``, else return the defaults."""
    path = path or os.environ.get(CONFIG_ENV)
    if not path:
        return PipelineConfig()
    try:
        with open(Path(path), "rb") as fh:
            doc = tomli.load(fh)
    except FileNotFoundError:
        raise ConfigurationError(f"config file not found: {path}") from None
    except tomli.TOMLDecodeError as exc:
        raise ConfigurationError(f"{path}: {exc}") from None
    return from_dict(doc)
