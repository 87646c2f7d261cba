"""Flat ``key = value`` run configuration merged from file, flags and overrides."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Mapping

from .errors import ConfigurationError, FormatError
from .nn.params import ModelConfig
from .trainer import TrainConfig


@dataclass
class RunOptions:
    corpus: str = ""
    dev: str = ""
    # fraction of the training file held out when no dev file is given
    dev_fraction: float = 0.1
    rules: str = "synthetic"
    expansions: str = ""
    b_file: str = ""
    b_from: str = ""
    tightness: float = 0.9
    column: str = "upos"
    strip_punct: bool = True
    max_len: int = 10
    dev_max_len: int = 10
    min_count: int = 2
    embeddings: str = ""
    clusters: str = ""
    out: str = "run"
    threads: int = 0


_SECTIONS = (("options", RunOptions), ("model", ModelConfig), ("train", TrainConfig))


def _coerce(name: str, value: Any, default: Any):
    if not isinstance(value, str):
        return value
    v = value.strip()
    try:
        if isinstance(default, bool):
            low = v.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(v)
        if isinstance(default, int):
            return int(v)
        if isinstance(default, float):
            return float(v)
    except ValueError:
        raise ConfigurationError(f"{name}: cannot read {value!r} as {type(default).__name__}") from None
    return v


def parse_config_text(text: str) -> dict[str, str]:
    out: dict[str, str] = {}
    for i, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise FormatError(f"expected 'key = value', got {raw.strip()!r}", i)
        out[key.strip().replace("-", "_")] = value.strip()
    return out


def parse_assignment(text: str) -> tuple[str, str]:
    key, sep, value = text.partition("=")
    if not sep or not key.strip():
        raise ConfigurationError(f"expected key=value, got {text!r}")
    return key.strip().replace("-", "_"), value.strip()


@dataclass
class RunConfig:
    options: RunOptions = field(default_factory=RunOptions)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)

    @staticmethod
    def keys() -> dict[str, tuple[str, Any]]:
        out = {}
        for section, cls in _SECTIONS:
            inst = cls()
            for f in fields(cls):
                out[f.name] = (section, getattr(inst, f.name))
        return out

    @classmethod
    def resolve(cls, *layers: Mapping[str, Any]) -> "RunConfig":
        """Later layers override earlier ones; unknown keys are errors."""
        schema = cls.keys()
        merged: dict[str, dict[str, Any]] = {s: {} for s, _ in _SECTIONS}
        for layer in layers:
            for key, value in layer.items():
                if value is None:
                    continue
                key = key.replace("-", "_")
                if key not in schema:
                    raise ConfigurationError(f"unknown configuration key {key!r}")
                section, default = schema[key]
                merged[section][key] = _coerce(key, value, default)
        try:
            return cls(RunOptions(**merged["options"]), ModelConfig(**merged["model"]),
                       TrainConfig(**merged["train"]))
        except TypeError as e:
            raise ConfigurationError(str(e)) from None

    @classmethod
    def from_file(cls, path, *overrides: Mapping[str, Any]) -> "RunConfig":
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as e:
            raise ConfigurationError(f"cannot read config {path}: {e.strerror}") from None
        return cls.resolve(parse_config_text(text), *overrides)

    def flat(self) -> dict[str, Any]:
        return {**asdict(self.options), **self.model.to_dict(), **self.train.to_dict()}

    def to_text(self) -> str:
        lines = []
        for section, _ in _SECTIONS:
            lines.append(f"# {section}")
            for k, v in asdict(getattr(self, section)).items():
                lines.append(f"{k} = {str(v).lower() if isinstance(v, bool) else v}")
        return "\n".join(lines) + "\n"
