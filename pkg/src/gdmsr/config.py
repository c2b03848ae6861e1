"""JSON run configuration with strict key checking."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field

from .dataset import FilterConfig, SplitConfig
from .denoiser import DenoiseConfig
from .recommender import RecConfig


class ConfigError(ValueError):
    pass


@dataclass
class DatasetSection:
    interactions: str | None = None
    social: str | None = None
    seed: int = 0
    # planted-cluster generator kwargs, used when no files are given
    synthetic: dict | None = None


@dataclass
class EvalSection:
    n_negatives: int = 100
    ks: list = field(default_factory=lambda: [1, 3])


@dataclass
class ExperimentSection:
    kind: str = "pipeline"
    seeds: list = field(default_factory=lambda: [0])
    target_ratio: float | None = None
    rule_ratio: float | None = None
    alphas: list = field(default_factory=lambda: [0.1, 0.3, 0.5, 0.7, 0.9])
    scorers: list = field(default_factory=lambda: ["transformer-history", "user-layer-0", "user-layer-1",
                                                   "item-mean-pool"])
    ratios: list = field(default_factory=lambda: [0.0, 0.1, 0.2, 0.3, 0.4, 0.6])
    zero_shot_fraction: float = 0.3
    fake_seed: int = 0


@dataclass
class RunConfig:
    dataset: DatasetSection = field(default_factory=DatasetSection)
    filter: FilterConfig = field(default_factory=FilterConfig)
    split: SplitConfig = field(default_factory=SplitConfig)
    denoiser: DenoiseConfig = field(default_factory=DenoiseConfig)
    recommender: RecConfig = field(default_factory=RecConfig)
    eval: EvalSection = field(default_factory=EvalSection)
    experiment: ExperimentSection = field(default_factory=ExperimentSection)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _build(cls, raw, where: str):
    if raw is None:
        return cls()
    if not isinstance(raw, dict):
        raise ConfigError(f"{where}: expected an object, got {type(raw).__name__}")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(raw) - names)
    if unknown:
        raise ConfigError(f"{where}: unknown keys {unknown}; valid keys are {sorted(names)}")
    try:
        return cls(**raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def parse_config(raw: dict) -> RunConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config: expected a JSON object")
    sections = {f.name: f.type for f in dataclasses.fields(RunConfig)}
    unknown = sorted(set(raw) - set(sections))
    if unknown:
        raise ConfigError(f"config: unknown sections {unknown}; valid sections are {sorted(sections)}")
    classes = {"dataset": DatasetSection, "filter": FilterConfig, "split": SplitConfig,
               "denoiser": DenoiseConfig, "recommender": RecConfig, "eval": EvalSection,
               "experiment": ExperimentSection}
    return RunConfig(**{name: _build(cls, raw.get(name), name) for name, cls in classes.items()})


def load_config(path) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return parse_config(raw)
