"""Single JSON configuration file with one flat section per module.
Command-line flags override file values; MODPIPE_CONFIG overrides the
default path."""

from __future__ import annotations

import json
import os
from pathlib import Path
from typing import Optional

from .features import FeaturizerConfig
from .net import NetworkConfig
from .select import LoopConfig, StrategyMix
from .train import TrainConfig

ENV_VAR = "MODPIPE_CONFIG"
DEFAULT_PATH = "modpipe.json"


class ConfigError(Exception):
    pass


DEFAULTS: dict = {
    "featurizer": {
        "word_orders": [1, 2],
        "char_orders": [3, 4, 5],
        "dim": 1 << 18,
        "signed": True,
        "lowercase": True,
    },
    "network": {
        "d_model": 256,
        "head_hidden": 256,
        "dropout": 0.1,
        "critic_hidden": [300, 300],
        "seed": 0,
    },
    "train": {
        "lr": 0.05,
        "batch_size": 256,
        "epochs": 3,
        "lam": 0.01,
        "clip": 0.01,
        "critic_steps": 1,
        "seed": 0,
        "mode": "supervised",
    },
    "select": {
        "mix": {"random": 1 / 3, "threshold": 1 / 3, "uncertainty": 1 / 3},
        "tau": 0.5,
        "seed": 0,
    },
    "loop": {
        "seed_size": 6000,
        "iterations": 3,
        "pool_size": 50_000,
        "batch_size": 2000,
        "reweight_key": None,
        "oversample": 3,
    },
    "quality": {
        "audit_fraction": 0.1,
        "min_audit": 10,
        "trigger_above": 0.30,
        "flag_below": 0.6,
        "seed": 0,
    },
    "probe": {"keep_threshold": 0.8, "lexicon": None},
    "service": {
        "host": "127.0.0.1",
        "port": 8700,
        "checkpoint": "model.ckpt.json",
        "store": "store.jsonl",
        "redteam": "redteam.jsonl",
        "pool": None,
        "audit_report": None,
        "thresholds": {},
        "token": None,
        "lease_seconds": 600,
    },
}


def _merge(base: dict, override: dict) -> dict:
    out = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = value
    return out


class Config:
    def __init__(self, raw: Optional[dict] = None, path: Optional[Path] = None):
        self.raw = _merge(DEFAULTS, raw or {})
        self.path = path

    def section(self, name: str) -> dict:
        return dict(self.raw.get(name, {}))

    def featurizer_config(self, **overrides) -> FeaturizerConfig:
        sec = _merge(self.section("featurizer"), overrides)
        return FeaturizerConfig(
            word_orders=tuple(sec["word_orders"]),
            char_orders=tuple(sec["char_orders"]),
            dim=int(sec["dim"]),
            signed=bool(sec["signed"]),
            lowercase=bool(sec["lowercase"]),
        )

    def network_config(self, **overrides) -> NetworkConfig:
        sec = _merge(self.section("network"), overrides)
        input_dim = sec.get("input_dim") or self.featurizer_config().dim
        return NetworkConfig(
            input_dim=int(input_dim),
            d_model=int(sec["d_model"]),
            head_hidden=int(sec["head_hidden"]),
            dropout=float(sec["dropout"]),
            critic_hidden=tuple(sec["critic_hidden"]),
            seed=int(sec["seed"]),
        )

    def train_config(self, **overrides) -> TrainConfig:
        return TrainConfig.from_obj(_merge(self.section("train"), overrides))

    def loop_config(self, **overrides) -> LoopConfig:
        return LoopConfig.from_obj(_merge(self.section("loop"), overrides))

    def strategy_mix(self, **overrides) -> StrategyMix:
        sec = _merge(self.section("select"), overrides)
        mix = sec.get("mix", {})
        return StrategyMix(
            random=float(mix.get("random", 1 / 3)),
            threshold=float(mix.get("threshold", 1 / 3)),
            uncertainty=float(mix.get("uncertainty", 1 / 3)),
            tau=sec.get("tau", 0.5),
        )


def load_config(path: Optional[str] = None) -> Config:
    """Resolution order: explicit path, then MODPIPE_CONFIG, then the default
    file if present, then built-in defaults.  An explicitly named file that
    does not exist is an error."""
    explicit = path or os.environ.get(ENV_VAR)
    if explicit:
        p = Path(explicit)
        if not p.exists():
            raise ConfigError(f"config file not found: {p}")
        return _read(p)
    p = Path(DEFAULT_PATH)
    if p.exists():
        return _read(p)
    return Config()


def _read(path: Path) -> Config:
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"config {path} must hold a JSON object")
    return Config(raw, path=path)


def write_default(path) -> Path:
    path = Path(path)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(DEFAULTS, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path
