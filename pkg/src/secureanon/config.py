"""Experiment configuration: nested dataclasses with strict JSON loading."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any


class ConfigError(ValueError):
    pass


@dataclass
class Dims:
    d_z: int = 64
    d_k: int = 64
    d_w: int = 64
    m: int = 4
    d_id: int = 16
    d_attr: int = 16
    height: int = 32
    width: int = 32


@dataclass
class FlowConfig:
    n_blocks: int = 8
    clamp: float = 2.0
    d_hidden: int = 0  # 0 means d_z + d_k
    out_gain: float = 0.1
    scale_bias: float = -4.0


@dataclass
class NetConfig:
    id_hidden: int = 256
    attr_hidden: int = 256
    map_hidden: int = 256
    gen_hidden: int = 256
    basis: int = 8
    proxy_dim: int = 16
    percep_hidden: int = 128
    percep_dim: int = 64


@dataclass
class TrainConfig:
    iters0: int = 3000
    iters1: int = 10000
    iters2: int = 20000
    batch0: int = 32
    lr0: float = 1e-3
    batch: int = 4
    lr: float = 4e-4
    beta1: float = 0.0
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    keys_per_batch: int = 2
    log_every: int = 100


@dataclass
class LossConfig:
    alpha: float = 0.84
    beta: float = 0.16
    lam: float = 0.01
    img_recovered: tuple[float, float, float, float] = (10.0, 1.0, 0.1, 0.01)
    img_other: tuple[float, float, float, float] = (0.01, 0.1, 0.1, 0.01)
    w_anon: float = 1.0
    w_div: float = 1.0
    w_deanon: float = 1.0
    w_img: float = 1.0


@dataclass
class Ablation:
    no_div: bool = False
    no_img: bool = False
    no_icl: bool = False
    no_dpt: bool = False


ABLATIONS = ("no_div", "no_img", "no_icl", "no_dpt")


@dataclass
class Seeds:
    model: int = 7
    keymap: int = 1009
    generator: int = 4242
    proxies: int = 99
    render: int = 20240917


@dataclass
class Config:
    dims: Dims = field(default_factory=Dims)
    flow: FlowConfig = field(default_factory=FlowConfig)
    nets: NetConfig = field(default_factory=NetConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    ablation: Ablation = field(default_factory=Ablation)
    seeds: Seeds = field(default_factory=Seeds)
    precision: str = "float32"

    def validate(self) -> "Config":
        d = self.dims
        for name in ("d_z", "d_k", "d_w", "m", "d_id", "d_attr", "height", "width"):
            if getattr(d, name) <= 0:
                raise ConfigError(f"dims.{name} must be positive")
        if d.d_z % 2:
            raise ConfigError("dims.d_z must be even")
        if self.flow.n_blocks < 1 or self.flow.clamp <= 0:
            raise ConfigError("flow.n_blocks >= 1 and flow.clamp > 0 required")
        t = self.train
        if min(t.batch, t.batch0, t.keys_per_batch) < 1 or min(t.iters0, t.iters1, t.iters2) < 0:
            raise ConfigError("train counts must be positive")
        if t.batch < 2 or t.keys_per_batch < 2:
            raise ConfigError("phase II needs batch >= 2 and keys_per_batch >= 2 for the diversity pairs")
        if t.lr <= 0:
            raise ConfigError("train.lr must be positive")
        if self.precision not in ("float32", "float64"):
            raise ConfigError(f"unknown precision {self.precision!r}")
        return self

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_dict(cls, raw: dict[str, Any]) -> "Config":
        return _build(cls, raw, "config").validate()

    @classmethod
    def from_json(cls, text: str) -> "Config":
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError(f"invalid JSON: {e}") from None
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
        return cls.from_dict(raw)

    @classmethod
    def load(cls, path: str | Path) -> "Config":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))

    def with_ablation(self, name: str | None) -> "Config":
        out = Config.from_dict(self.to_dict())
        if name:
            if name not in ABLATIONS:
                raise ConfigError(f"unknown ablation {name!r}")
            setattr(out.ablation, name, True)
        return out


def _build(cls, raw: Any, where: str):
    if not isinstance(raw, dict):
        raise ConfigError(f"{where} must be an object")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(raw) - set(fields)
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(sorted(unknown))}")
    kwargs = {}
    defaults = cls()
    for name, value in raw.items():
        current = getattr(defaults, name)
        if dataclasses.is_dataclass(current):
            kwargs[name] = _build(type(current), value, f"{where}.{name}")
        elif isinstance(current, tuple):
            if not isinstance(value, (list, tuple)) or len(value) != len(current):
                raise ConfigError(f"{where}.{name} must be a list of {len(current)} numbers")
            kwargs[name] = tuple(float(v) for v in value)
        elif isinstance(current, bool):
            if not isinstance(value, bool):
                raise ConfigError(f"{where}.{name} must be a boolean")
            kwargs[name] = value
        elif isinstance(current, int):
            if isinstance(value, bool) or not isinstance(value, int):
                raise ConfigError(f"{where}.{name} must be an integer")
            kwargs[name] = value
        elif isinstance(current, float):
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ConfigError(f"{where}.{name} must be a number")
            kwargs[name] = float(value)
        else:
            if not isinstance(value, type(current)):
                raise ConfigError(f"{where}.{name} has the wrong type")
            kwargs[name] = value
    return cls(**kwargs)
