"""Experiment configuration and its INI-style file grammar.

Example::

    [experiment]
    mode = two_stage_dual_task
    seed = 7
    lam = 1.0

    [model]
    stage_widths = 8, 16, 32
    latent_dim = 64

    [optim]
    epochs = 150

Every key is optional; missing keys take the defaults below.  Unknown
sections or keys are rejected so typos cannot silently fall back to a
default.  ``to_ini`` writes every key, giving a complete replayable record.
"""

from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass

from ..data.augment import AugmentSpec
from ..nn import EncoderConfig, HeadConfig, NetworkConfig, SequenceHeadConfig
from .modes import parse_mode


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    # [experiment]
    mode: str = "two_stage_dual_task"
    seed: int = 0
    folds: int = 5
    lam: float = 1.0
    # [model]
    latent_dim: int = 64
    stage_widths: tuple = (8, 16, 32)
    blocks_per_stage: int = 2
    stem_kernel: int = 3
    stem_stride: int = 1
    lstm_layers: int = 2
    lstm_hidden: int = 64
    rnn_layers: int = 2
    head_hidden: int = 32
    dropout: float = 0.5
    # [optim]
    lr: float = 1e-3
    weight_decay: float = 0.01
    epochs: int = 150
    batch_size: int = 64
    patience: int = 20
    factor: float = 10.0
    min_lr: float = 1e-6
    # [augment]
    flip_p: float = 0.5
    flip_axes: tuple = ("W",)
    max_angle: float = 180.0
    noise_std: float = 0.3

    def __post_init__(self):
        try:
            parse_mode(self.mode)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        object.__setattr__(self, "mode", parse_mode(self.mode).value)
        if self.folds != 5:
            raise ConfigError("folds: the nested protocol is defined for 5 folds")
        for name in ("epochs", "batch_size", "patience", "latent_dim", "lstm_hidden", "head_hidden"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.lam < 0:
            raise ConfigError("lam must be >= 0")
        if not 0.0 <= self.dropout <= 1.0:
            raise ConfigError("dropout must be in [0, 1]")

    def network(self, use_clinical: bool = True, use_subtype: bool = True,
                dropout: bool = True) -> NetworkConfig:
        return NetworkConfig(
            encoder=EncoderConfig(stage_widths=self.stage_widths,
                                  blocks_per_stage=self.blocks_per_stage,
                                  latent_dim=self.latent_dim, stem_kernel=self.stem_kernel,
                                  stem_stride=self.stem_stride),
            sequence=SequenceHeadConfig(lstm_layers=self.lstm_layers,
                                        lstm_hidden=self.lstm_hidden, rnn_layers=self.rnn_layers),
            head=HeadConfig(dropout_rate=self.dropout if dropout else 0.0, hidden=self.head_hidden,
                            use_clinical=use_clinical, use_subtype=use_subtype),
        )

    def augment_spec(self, noise: bool) -> AugmentSpec:
        return AugmentSpec(flip_p=self.flip_p, flip_axes=self.flip_axes,
                           max_angle=self.max_angle, noise=noise, noise_std=self.noise_std)

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    def to_ini(self) -> str:
        lines = []
        for section, keys in SECTIONS.items():
            lines.append(f"[{section}]")
            for key in keys:
                lines.append(f"{key} = {_format(getattr(self, key))}")
            lines.append("")
        return "\n".join(lines)

    def as_dict(self) -> dict:
        return {k: (list(v) if isinstance(v, tuple) else v)
                for k, v in dataclasses.asdict(self).items()}


SECTIONS = {
    "experiment": ("mode", "seed", "folds", "lam"),
    "model": ("latent_dim", "stage_widths", "blocks_per_stage", "stem_kernel", "stem_stride",
              "lstm_layers", "lstm_hidden", "rnn_layers", "head_hidden", "dropout"),
    "optim": ("lr", "weight_decay", "epochs", "batch_size", "patience", "factor", "min_lr"),
    "augment": ("flip_p", "flip_axes", "max_angle", "noise_std"),
}

_DEFAULTS = ExperimentConfig()


def _format(value) -> str:
    if isinstance(value, tuple):
        return ", ".join(str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _coerce(key: str, raw: str):
    default = getattr(_DEFAULTS, key)
    try:
        if isinstance(default, tuple):
            items = [v.strip() for v in raw.split(",") if v.strip()]
            return tuple(items) if isinstance(default[0], str) else tuple(int(v) for v in items)
        if isinstance(default, bool):
            return raw.strip().lower() in ("1", "true", "yes", "on")
        return type(default)(raw.strip())
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r} as {type(default).__name__}") from None


def from_ini(text: str, **overrides) -> ExperimentConfig:
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    values = {}
    for section in parser.sections():
        if section not in SECTIONS:
            raise ConfigError(f"unknown section [{section}]; valid: {', '.join(SECTIONS)}")
        for key, raw in parser.items(section):
            if key not in SECTIONS[section]:
                raise ConfigError(f"unknown key {key!r} in [{section}]")
            values[key] = _coerce(key, raw)
    values.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig(**values)


def load_config(path=None, **overrides) -> ExperimentConfig:
    text = "" if path is None else open(path, encoding="utf-8").read()
    return from_ini(text, **overrides)
