"""Run configuration: one JSON document holding every tunable.

Unknown keys are rejected so typos fail loudly; missing keys fall back to the
documented defaults. The top-level ``rng_seed`` is the single pipeline seed
(the synth section must not carry its own).
"""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field

from .direction import BinScheme
from .losses import LossWeights
from .metrics import MatchConfig
from .providers import ClassicalParams
from .raster import RasterConfig
from .synth import SynthConfig
from .tracer import TraceConfig

__all__ = ["ConfigError", "ProviderSpec", "RunConfig", "load_config", "save_config"]

#: provider kinds and whether their direction smoothing defaults on
_PROVIDER_KINDS = {"oracle": False, "classical": True, "file": False}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ProviderSpec:
    kind: str = "oracle"
    history_smoothing: bool | None = None
    paths: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in _PROVIDER_KINDS:
            raise ConfigError(f"unknown provider kind {self.kind!r}")

    def smoothing(self) -> bool:
        if self.history_smoothing is None:
            return _PROVIDER_KINDS[self.kind]
        return bool(self.history_smoothing)


@dataclass(frozen=True)
class RunConfig:
    rng_seed: int = 0
    bins_k: int = 64
    losses: LossWeights = field(default_factory=LossWeights)
    trace: TraceConfig = field(default_factory=TraceConfig)
    match: MatchConfig = field(default_factory=MatchConfig)
    raster: RasterConfig = field(default_factory=RasterConfig)
    synth: SynthConfig = field(default_factory=SynthConfig)
    classical: ClassicalParams = field(default_factory=ClassicalParams)
    provider: ProviderSpec = field(default_factory=ProviderSpec)

    def bin_scheme(self) -> BinScheme:
        return BinScheme(K=self.bins_k)


_SECTIONS = {
    "losses": LossWeights,
    "trace": TraceConfig,
    "match": MatchConfig,
    "raster": RasterConfig,
    "synth": SynthConfig,
    "classical": ClassicalParams,
    "provider": ProviderSpec,
}


def _build_section(cls, data, where):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected an object, got {type(data).__name__}")
    names = [f.name for f in dataclasses.fields(cls)]
    unknown = sorted(set(data) - set(names))
    if unknown:
        raise ConfigError(f"{where}: unknown keys {unknown} (known: {sorted(names)})")
    kwargs = {}
    for name in names:
        if name in data:
            value = data[name]
            kwargs[name] = tuple(value) if isinstance(value, list) else value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


def load_config(path: str) -> RunConfig:
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    with open(path) as f:
        try:
            data = json.load(f)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be an object")
    known = {"rng_seed", "bins_k"} | set(_SECTIONS)
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"{path}: unknown keys {unknown} (known: {sorted(known)})")
    if isinstance(data.get("synth"), dict) and "rng_seed" in data["synth"]:
        raise ConfigError(f"{path}: set the top-level rng_seed, not synth.rng_seed")
    kwargs = {}
    if "rng_seed" in data:
        kwargs["rng_seed"] = int(data["rng_seed"])
    if "bins_k" in data:
        kwargs["bins_k"] = int(data["bins_k"])
    for name, cls in _SECTIONS.items():
        if name in data:
            kwargs[name] = _build_section(cls, data[name], f"{path}: section {name!r}")
    try:
        return RunConfig(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from None


def save_config(cfg: RunConfig, path: str) -> None:
    data = dataclasses.asdict(cfg)
    # the pipeline seed lives at the top level only
    data["synth"].pop("rng_seed", None)
    tmp = path + ".tmp"
    with open(tmp, "w") as f:
        json.dump(data, f, indent=2, sort_keys=True)
        f.write("\n")
    os.replace(tmp, path)
