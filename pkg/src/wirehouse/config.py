"""Pipeline configuration: named presets plus INI-style ``key = value`` overrides.

A config file looks like::

    preset = desk

    [ae_train]
    total_epochs = 400
    lr_max = 2e-3

Keys outside any section are read as the ``[pipeline]`` section. Values are
Python literals (numbers, tuples, None); anything else is kept as a string.
"""

from __future__ import annotations

import ast
import configparser
import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from .autoencoder import AEConfig
from .generator import GenConfig
from .metrics import EvalConfig
from .nn.training import TrainConfig
from .synthesis import SynthesisConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SampleConfig:
    count: int = 50
    temperature: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.count < 0 or self.temperature < 0:
            raise ValueError("count and temperature must be non-negative")


SECTIONS = {
    "synth": SynthesisConfig,
    "ae": AEConfig,
    "ae_train": TrainConfig,
    "gen": GenConfig,
    "gen_train": TrainConfig,
    "sample": SampleConfig,
    "eval": EvalConfig,
}


@dataclass(frozen=True)
class PipelineConfig:
    preset: str
    synth: SynthesisConfig
    ae: AEConfig
    ae_train: TrainConfig
    gen: GenConfig
    gen_train: TrainConfig
    sample: SampleConfig = field(default_factory=SampleConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)

    def __post_init__(self):
        if (self.ae.code_dim, self.ae.depth) != (self.gen.code_dim, self.gen.depth):
            raise ConfigError("autoencoder and generator disagree on code_dim / depth")
        if self.gen.max_segments < self.synth.max_segments:
            raise ConfigError("generator max_segments is below the dataset segment limit")

    def to_dict(self) -> dict:
        out = {"preset": self.preset}
        for name in SECTIONS:
            out[name] = _plain(dataclasses.asdict(getattr(self, name)))
        return out

    def digest(self) -> str:
        """Hash of every effective parameter (the preset name itself is excluded)."""
        d = self.to_dict()
        d.pop("preset")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()


def _plain(d: dict) -> dict:
    return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}


def desk_preset() -> PipelineConfig:
    return PipelineConfig(
        preset="desk",
        synth=SynthesisConfig(max_segments=100),
        ae=AEConfig(),
        ae_train=TrainConfig(lr_max=2e-3, lr_min=2e-5, warmup_epochs=150,
                             total_epochs=3000, batch_size=10),
        gen=GenConfig(),
        gen_train=TrainConfig(lr_max=1e-3, lr_min=1e-5, warmup_epochs=100,
                              total_epochs=2000, batch_size=10),
        sample=SampleConfig(count=50),
        eval=EvalConfig(points=512, emd_points=256),
    )


def paper_preset() -> PipelineConfig:
    return PipelineConfig(
        preset="paper",
        synth=SynthesisConfig(max_segments=400),
        ae=AEConfig.paper(),
        ae_train=TrainConfig(lr_max=1e-4, lr_min=1e-6, warmup_epochs=10, total_epochs=200,
                             batch_size=64),
        gen=GenConfig.paper(),
        gen_train=TrainConfig(lr_max=1e-4, lr_min=1e-6, warmup_epochs=10, total_epochs=200,
                              batch_size=64),
        sample=SampleConfig(count=8192),
        eval=EvalConfig(points=4096, emd_points=4096),
    )


PRESETS = {"desk": desk_preset, "paper": paper_preset}


def _literal(text: str):
    try:
        value = ast.literal_eval(text)
    except (ValueError, SyntaxError):
        return text
    return tuple(value) if isinstance(value, list) else value


def apply_overrides(base: PipelineConfig, overrides: dict) -> PipelineConfig:
    """``overrides`` maps section -> {key: value}; unknown names are errors."""
    changes = {}
    for section, values in overrides.items():
        if section not in SECTIONS:
            raise ConfigError(f"unknown config section [{section}]")
        current = getattr(base, section)
        known = {f.name for f in dataclasses.fields(current)}
        bad = set(values) - known
        if bad:
            raise ConfigError(f"unknown key(s) in [{section}]: {', '.join(sorted(bad))}")
        try:
            changes[section] = dataclasses.replace(current, **values)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"[{section}]: {exc}") from None
    try:
        return dataclasses.replace(base, **changes)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def parse_config(text: str, preset: str | None = None) -> PipelineConfig:
    """Parse a config file; ``preset``, when given, replaces the file's own choice."""
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string("[pipeline]\n" + text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from None
    top = dict(parser["pipeline"])
    preset = preset or top.pop("preset", "desk")
    top.pop("preset", None)
    if top:
        raise ConfigError(f"unknown top-level key(s): {', '.join(sorted(top))}")
    if preset not in PRESETS:
        raise ConfigError(f"unknown preset {preset!r}; choose from {', '.join(PRESETS)}")
    overrides = {s: {k: _literal(v) for k, v in parser[s].items()}
                 for s in parser.sections() if s != "pipeline"}
    return apply_overrides(PRESETS[preset](), overrides)


def load_config(path=None, preset: str | None = None) -> PipelineConfig:
    if path is None:
        name = preset or "desk"
        if name not in PRESETS:
            raise ConfigError(f"unknown preset {name!r}")
        return PRESETS[name]()
    return parse_config(Path(path).read_text(), preset)


def format_config(cfg: PipelineConfig) -> str:
    """Render a config file that reproduces ``cfg`` exactly."""
    lines = [f"preset = {cfg.preset}", ""]
    d = cfg.to_dict()
    for section in SECTIONS:
        lines.append(f"[{section}]")
        for k, v in d[section].items():
            lines.append(f"{k} = {tuple(v) if isinstance(v, list) else v!r}")
        lines.append("")
    return "\n".join(lines)
