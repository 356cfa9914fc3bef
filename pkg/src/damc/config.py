"""Strict YAML experiment configuration.

Every section maps onto a frozen dataclass. Unknown keys, wrong types and
missing required fields (notably all seeds) raise :class:`ConfigError` with
the dotted key path.
"""
from __future__ import annotations

import dataclasses
import math
import types
import typing
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import yaml

from .data import (
    DomainPair,
    SyntheticShiftSpec,
    gen_shifted_gaussians,
    gen_two_moons_shift,
    load_idx,
)
from .losses import AdaptationWeights
from .model import ClassifierBankSpec, GeneratorSpec
from .numerics import OptimizerConfig
from .pipeline import AdaptConfig, PretrainConfig

__all__ = ["ConfigError", "ExperimentConfig", "load_config", "parse_config"]


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SyntheticSection:
    seed: int
    c: int = 3
    n_per_class: int = 200
    radius: float = 3.0
    std: float = 0.8
    rotation_deg: float = 45.0
    translation: tuple[float, float] = (0.5, -0.5)
    std_inflation: float = 1.2


@dataclass(frozen=True)
class TwoMoonsSection:
    seed: int
    n: int = 400
    noise: float = 0.1
    rotation_deg: float = 30.0


@dataclass(frozen=True)
class IdxSection:
    source_images: str
    source_labels: str
    target_images: str
    target_labels: str
    c: int = 10


@dataclass(frozen=True)
class DataSection:
    kind: str
    standardize: bool = True
    synthetic: Optional[SyntheticSection] = None
    two_moons: Optional[TwoMoonsSection] = None
    idx: Optional[IdxSection] = None


@dataclass(frozen=True)
class ModelSection:
    k: int
    hidden_dims: tuple[int, ...] = (32, 32)
    feature_dim: int = 16
    head_hidden: int = 16


@dataclass(frozen=True)
class PretrainSection:
    epochs: int = 20
    tau: float = 0.1
    alpha_s: float = 0.3
    inner_cap: int = 20
    batch_size: int = 32
    eta0: float = 0.02
    momentum: float = 0.9
    weight_decay: float = 5.0e-4


@dataclass(frozen=True)
class AdaptSection:
    epochs: int = 30
    alpha_t: float = 0.5
    gamma1: float = 0.1
    gamma2: float = 0.1
    beta: float = 0.1
    pseudo_start_epoch: int = 1
    pseudo_interval: int = 2
    batch_size: int = 32
    eta0: float = 0.01
    momentum: float = 0.9
    weight_decay: float = 5.0e-4


@dataclass(frozen=True)
class ExperimentConfig:
    seeds: tuple[int, ...]
    data: DataSection
    model: ModelSection
    pretrain: PretrainSection = PretrainSection()
    adapt: AdaptSection = AdaptSection()
    output_dir: str = "runs/default"
    base_dir: str = field(default=".", compare=False)

    @property
    def c(self) -> int:
        section = getattr(self.data, self.data.kind)
        return 2 if self.data.kind == "two_moons" else section.c

    def generator_spec(self, input_dim: int) -> GeneratorSpec:
        return GeneratorSpec(input_dim, self.model.hidden_dims, self.model.feature_dim)

    def bank_spec(self) -> ClassifierBankSpec:
        return ClassifierBankSpec(self.model.k, self.c, self.model.head_hidden)

    def pretrain_config(self, seed: int) -> PretrainConfig:
        p = self.pretrain
        return PretrainConfig(
            epochs=p.epochs, tau=p.tau, alpha_s=p.alpha_s, inner_cap=p.inner_cap,
            batch_size=p.batch_size, shuffle_seed=seed,
            optimizer=OptimizerConfig(p.eta0, p.momentum, p.weight_decay),
        )

    def adapt_config(self, seed: int, weights: AdaptationWeights | None = None) -> AdaptConfig:
        a = self.adapt
        return AdaptConfig(
            epochs=a.epochs,
            weights=weights or AdaptationWeights(a.alpha_t, a.gamma1, a.gamma2, a.beta),
            pseudo_start_epoch=a.pseudo_start_epoch, pseudo_interval=a.pseudo_interval,
            batch_size=a.batch_size, shuffle_seed=seed,
            optimizer=OptimizerConfig(a.eta0, a.momentum, a.weight_decay),
        )

    def with_k(self, k: int) -> ExperimentConfig:
        return dataclasses.replace(self, model=dataclasses.replace(self.model, k=k))

    def resolve(self, p: str) -> Path:
        path = Path(p)
        return path if path.is_absolute() else Path(self.base_dir) / path

    def load_domains(self) -> DomainPair:
        d = self.data
        if d.kind == "synthetic":
            s = d.synthetic
            return gen_shifted_gaussians(SyntheticShiftSpec(
                c=s.c, n_per_class=s.n_per_class, radius=s.radius, std=s.std,
                rotation=math.radians(s.rotation_deg), translation=s.translation,
                std_inflation=s.std_inflation, seed=s.seed))
        if d.kind == "two_moons":
            s = d.two_moons
            return gen_two_moons_shift(s.n, s.noise, math.radians(s.rotation_deg), s.seed)
        s = d.idx
        return DomainPair(
            load_idx(self.resolve(s.source_images), self.resolve(s.source_labels), s.c, "source"),
            load_idx(self.resolve(s.target_images), self.resolve(s.target_labels), s.c, "target"),
        )


# ---------------------------------------------------------------- parsing


def _convert(tp, value, keypath: str):
    origin = typing.get_origin(tp)
    if origin in (typing.Union, types.UnionType):
        args = [a for a in typing.get_args(tp) if a is not type(None)]
        if value is None:
            return None
        return _convert(args[0], value, keypath)
    if dataclasses.is_dataclass(tp):
        if not isinstance(value, dict):
            raise ConfigError(f"{keypath}: expected a mapping, got {type(value).__name__}")
        return _build(tp, value, keypath)
    if origin is tuple:
        args = typing.get_args(tp)
        if not isinstance(value, list):
            raise ConfigError(f"{keypath}: expected a list, got {type(value).__name__}")
        if len(args) == 2 and args[1] is Ellipsis:
            return tuple(_convert(args[0], v, f"{keypath}[{i}]") for i, v in enumerate(value))
        if len(value) != len(args):
            raise ConfigError(f"{keypath}: expected {len(args)} entries, got {len(value)}")
        return tuple(_convert(a, v, f"{keypath}[{i}]") for i, (a, v) in enumerate(zip(args, value)))
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{keypath}: expected true/false, got {value!r}")
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{keypath}: expected an integer, got {value!r}")
        return value
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{keypath}: expected a number, got {value!r}")
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(f"{keypath}: expected a string, got {value!r}")
        return value
    raise TypeError(f"unsupported config type {tp!r}")


def _build(cls, mapping: dict[str, Any], keypath: str):
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls) if f.name != "base_dir"}
    unknown = sorted(set(mapping) - names)
    if unknown:
        prefix = f"{keypath}." if keypath else ""
        raise ConfigError(f"unknown key(s): {', '.join(prefix + u for u in unknown)}")
    kwargs = {}
    for f in dataclasses.fields(cls):
        if f.name not in mapping:
            if f.default is dataclasses.MISSING and f.default_factory is dataclasses.MISSING:
                raise ConfigError(f"missing required key {keypath + '.' if keypath else ''}{f.name}")
            continue
        kwargs[f.name] = _convert(hints[f.name], mapping[f.name], f"{keypath}.{f.name}" if keypath else f.name)
    return cls(**kwargs)


def parse_config(mapping: dict[str, Any], base_dir: str | Path = ".") -> ExperimentConfig:
    if not isinstance(mapping, dict):
        raise ConfigError("config root must be a mapping")
    cfg = _build(ExperimentConfig, mapping, "")
    cfg = dataclasses.replace(cfg, base_dir=str(base_dir))
    _validate(cfg)
    return cfg


def _validate(cfg: ExperimentConfig) -> None:
    if not cfg.seeds:
        raise ConfigError("seeds: at least one seed is required")
    kinds = ("synthetic", "two_moons", "idx")
    if cfg.data.kind not in kinds:
        raise ConfigError(f"data.kind: expected one of {kinds}, got {cfg.data.kind!r}")
    if getattr(cfg.data, cfg.data.kind) is None:
        raise ConfigError(f"data.{cfg.data.kind}: section required for kind {cfg.data.kind!r}")
    if cfg.data.kind == "idx":
        for name in ("source_images", "source_labels", "target_images", "target_labels"):
            path = cfg.resolve(getattr(cfg.data.idx, name))
            if not path.exists():
                raise ConfigError(f"data.idx.{name}: no such file {path}")
    # build the runtime configs once so their own invariants surface here
    try:
        cfg.bank_spec()
        cfg.generator_spec(1)
        cfg.pretrain_config(0)
        cfg.adapt_config(0)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        mapping = yaml.safe_load(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}") from exc
    return parse_config(mapping, path.parent)
