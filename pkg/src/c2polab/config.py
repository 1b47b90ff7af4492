"""Experiment configuration: one YAML file with system/recipe/train/eval/seeds blocks.

Example::

    system: {users: 8, antennas: 128, power: 1.0, modulation: 16QAM, t_max: 7}
    recipe: {kind: NT1, target_norm: 14.5, K: 500}
    train: {lr_tau: 0.2, lr_rho: 0.05, max_epochs: 1000, quantizer: straight-through}
    init: {norm_ref: 14.5, rho: 1.05}
    eval:
      snr_db: [-10, -6, -2, 2, 6, 10, 14, 18, 22]
      trials: 100000
      floor_trials: 1000000
      min_errors: 100
      norms: [13.5, 14.5, 16, 18]
      sweep_recipe: NT1
    seeds: {master: 2020, gen: 1, train: 2, eval: 3, sweep: 4}

Unknown keys are rejected so typos do not silently fall back to defaults.
"""
from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import yaml

from .channel import Recipe, SystemConfig
from .errors import ArgumentError
from .numerics import RngStream
from .precoder import BASELINE_NORM, BASELINE_RHO, PrecoderParams
from .trainer import TrainHyper

FIG4_SNR_DB = [-10.0, -6.0, -2.0, 2.0, 6.0, 10.0, 14.0, 18.0, 22.0]


@dataclass
class EvalBlock:
    snr_db: list = field(default_factory=lambda: list(FIG4_SNR_DB))
    trials: int = 100_000
    floor_trials: int = 1_000_000
    min_errors: int | None = 100
    norms: list = field(default_factory=lambda: [13.5, 14.5, 16.0, 18.0])
    sweep_recipe: str = "NT1"
    chunk_size: int = 2000


@dataclass
class SeedBlock:
    master: int
    gen: int = 1
    train: int = 2
    eval: int = 3
    sweep: int = 4

    def stream(self, name: str) -> RngStream:
        return RngStream(self.master, getattr(self, name))


@dataclass
class InitBlock:
    norm_ref: float = BASELINE_NORM
    rho: float = BASELINE_RHO


@dataclass
class ExperimentConfig:
    system: SystemConfig
    recipe: Recipe
    K: int
    train: TrainHyper
    init: InitBlock
    eval: EvalBlock
    seeds: SeedBlock

    def init_params(self) -> PrecoderParams:
        return PrecoderParams.baseline(self.system.t_max, self.init.norm_ref, self.init.rho)

    def to_dict(self) -> dict:
        return {
            "system": asdict(self.system),
            "recipe": {"kind": self.recipe.kind, "target_norm": self.recipe.target_norm, "K": self.K},
            "train": asdict(self.train),
            "init": asdict(self.init),
            "eval": asdict(self.eval),
            "seeds": asdict(self.seeds),
        }

    def digest(self) -> str:
        """SHA-256 of the canonical JSON form; identifies the exact configuration."""
        text = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(text.encode()).hexdigest()

    def with_overrides(self, seed=None, target_norm=None, t_max=None, recipe=None) -> "ExperimentConfig":
        cfg = copy.deepcopy(self)
        if seed is not None:
            cfg.seeds.master = int(seed)
        if recipe is not None:
            cfg.recipe = Recipe.parse(recipe)
        if target_norm is not None:
            kind = cfg.recipe.kind if cfg.recipe.kind != "DF" else "NT1"
            cfg.recipe = Recipe(kind, float(target_norm))
        if t_max is not None:
            cfg.system = cfg.system.replace(t_max=int(t_max))
        return cfg


def _build(cls, block, name):
    block = dict(block or {})
    known = {f.name for f in fields(cls)}
    unknown = set(block) - known
    if unknown:
        raise ArgumentError(f"unknown key(s) in '{name}' block: {sorted(unknown)}")
    try:
        return cls(**block)
    except TypeError as exc:
        raise ArgumentError(f"invalid '{name}' block: {exc}") from None


def from_dict(doc: dict) -> ExperimentConfig:
    doc = dict(doc or {})
    unknown = set(doc) - {"system", "recipe", "train", "init", "eval", "seeds"}
    if unknown:
        raise ArgumentError(f"unknown config block(s): {sorted(unknown)}")
    seeds = doc.get("seeds") or {}
    if "master" not in seeds:
        raise ArgumentError("config needs seeds.master")
    recipe = dict(doc.get("recipe") or {})
    K = int(recipe.pop("K", 500))
    if K < 1:
        raise ArgumentError("recipe.K must be positive")
    return ExperimentConfig(
        system=_build(SystemConfig, doc.get("system"), "system"),
        recipe=_build(Recipe, recipe, "recipe"),
        K=K,
        train=_build(TrainHyper, doc.get("train"), "train"),
        init=_build(InitBlock, doc.get("init"), "init"),
        eval=_build(EvalBlock, doc.get("eval"), "eval"),
        seeds=_build(SeedBlock, seeds, "seeds"),
    )


def load_config(path) -> ExperimentConfig:
    try:
        doc = yaml.safe_load(Path(path).read_text())
    except yaml.YAMLError as exc:
        raise ArgumentError(f"cannot parse {path}: {exc}") from None
    return from_dict(doc)
