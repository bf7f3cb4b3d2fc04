"""Run configuration: flat ``key=value`` files, overridable per key."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Optional

from .convolution import ConvBlockConfig

DEFAULT_GROUPS = {"cnn": "100:3,100:4,100:5", "dpcnn": "100:3", "densecnn": "75:3"}
DEFAULT_DEPTH = {"cnn": 1, "dpcnn": 11, "densecnn": 3}


class ConfigError(ValueError):
    pass


@dataclass
class TrainConfig:
    seed: int = 1
    lr: float = 1e-3
    batch_size: int = 128
    epochs: int = 30
    patience: int = 20
    stop_at_f1: float = 0.0  # stop once dev F1 reaches this (0 disables)

    variant: str = "cnn"
    generation: str = "full"
    filters: str = ""  # "n:s,n:s"; empty -> variant default
    depth: int = 0  # 0 -> variant default
    pool_size: int = 20
    importance: int = 5
    hash_seed: int = -1  # -1 -> derived from seed
    activation: str = "relu"
    context_mode: str = "per_position"
    pad_length: int = 0  # densecnn; 0 -> longest training sentence

    word_dim: int = 200
    lemma_dim: int = 200
    pos_dim: int = 32
    flag_dim: int = 16
    contextual_dim: int = 300
    lstm_hidden: int = 256
    lstm_layers: int = 4
    tree_hidden: int = 0  # 0 -> BiLSTM output width
    use_tree: bool = True
    mlp_hidden: int = 300
    mlp_layers: int = 10
    mlp_input: str = "conv"  # conv | concat
    sense_mlp_layers: int = 10
    init_std: float = 0.1
    max_len: int = 128
    predicted_syntax: bool = False

    train: str = ""
    dev: str = ""
    test: str = ""
    embeddings: str = ""
    contextual: str = ""
    dev_contextual: str = ""
    output: str = "run"

    # ---------------------------------------------------------------

    @property
    def filter_groups(self) -> list:
        return parse_groups(self.filters or DEFAULT_GROUPS[self.variant])

    @property
    def block_depth(self) -> int:
        return self.depth or DEFAULT_DEPTH[self.variant]

    @property
    def resolved_hash_seed(self) -> int:
        return self.hash_seed if self.hash_seed >= 0 else (self.seed * 7919 + 17)

    def conv_config(self, pad_length: Optional[int] = None) -> ConvBlockConfig:
        return ConvBlockConfig(
            variant=self.variant, groups=self.filter_groups, depth=self.block_depth,
            generation=self.generation, activation=self.activation, pool_size=self.pool_size,
            importance=self.importance, context_mode=self.context_mode,
            pad_length=self.pad_length if pad_length is None else pad_length,
            hash_seed=self.resolved_hash_seed)

    def validate(self) -> "TrainConfig":
        if self.variant not in DEFAULT_GROUPS:
            raise ConfigError(f"unknown variant {self.variant!r}")
        if self.pool_size < 1:
            raise ConfigError("pool_size (l) must be >= 1")
        if self.importance < 1:
            raise ConfigError("importance (z) must be >= 1")
        if self.depth < 0 or self.block_depth < 1:
            raise ConfigError("depth must be >= 1")
        if self.mlp_input not in ("conv", "concat"):
            raise ConfigError("mlp_input must be 'conv' or 'concat'")
        if self.batch_size < 1 or self.lr <= 0:
            raise ConfigError("batch_size must be >= 1 and lr > 0")
        if self.lstm_layers < 1 or self.lstm_hidden < 1:
            raise ConfigError("BiLSTM needs >= 1 layer and hidden >= 1")
        try:
            self.conv_config().validate()
        except ValueError as err:
            raise ConfigError(str(err)) from None
        return self

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    def replace(self, **kw) -> "TrainConfig":
        return dataclasses.replace(self, **kw)

    def with_overrides(self, pairs: dict) -> "TrainConfig":
        return self.replace(**{k: coerce(k, v) for k, v in pairs.items()})

    def dumps(self) -> str:
        return "".join(f"{k}={_render(v)}\n" for k, v in self.to_dict().items())


def parse_groups(text: str) -> list:
    groups = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        try:
            n, s = part.split(":")
            groups.append((int(n), int(s)))
        except ValueError:
            raise ConfigError(f"bad filter group {part!r}, expected count:window") from None
    return groups


_FIELDS = {f.name: f for f in dataclasses.fields(TrainConfig)}


def _render(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    return str(v)


def coerce(key: str, raw) -> object:
    f = _FIELDS.get(key)
    if f is None:
        raise ConfigError(f"unknown config key {key!r}")
    if not isinstance(raw, str):
        return raw
    kind = f.type if isinstance(f.type, str) else f.type.__name__
    try:
        if kind == "bool":
            low = raw.strip().lower()
            if low not in ("1", "0", "true", "false", "yes", "no"):
                raise ValueError(raw)
            return low in ("1", "true", "yes")
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
    except ValueError:
        raise ConfigError(f"bad value for {key}: {raw!r}") from None
    return raw.strip()


def parse_config_text(text: str) -> dict:
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value")
        k, v = line.split("=", 1)
        out[k.strip()] = coerce(k.strip(), v)
    return out


def load_config(path=None, overrides: Optional[dict] = None) -> TrainConfig:
    values = {}
    if path:
        with open(path, encoding="utf-8") as fh:
            values.update(parse_config_text(fh.read()))
    for k, v in (overrides or {}).items():
        values[k] = coerce(k, v)
    return TrainConfig(**values).validate()
