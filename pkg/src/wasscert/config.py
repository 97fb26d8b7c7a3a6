"""Strict JSON experiment configuration.

Unknown keys, wrong types and out-of-range values raise
:class:`~wasscert.errors.ConfigError` naming the key. ``to_dict`` writes every
field, defaults included, so a persisted config reproduces its run.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional

from .errors import ConfigError
from .measures import SamplingDistribution
from .network import ACTIVATIONS, MlpSpec
from .training import MODES, TargetFunction, TrainSettings

COMMANDS = ("sample", "wasserstein", "train", "certify", "rate-fit", "converge-n", "converge-width",
            "local-study")


@dataclass(frozen=True)
class NetworkConfig:
    hidden: tuple[int, ...] = (8,)
    activation: str = "relu"

    def spec(self, dim: int) -> MlpSpec:
        return MlpSpec.hidden(dim, self.hidden, self.activation)

    def to_dict(self) -> dict:
        return {"hidden": list(self.hidden), "activation": self.activation}


def _int(data, key, lo=None, path=""):
    v = data[key]
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(path + key, "must be an integer")
    if lo is not None and v < lo:
        raise ConfigError(path + key, f"{key} >= {lo}")
    return v


def _num(data, key, path=""):
    v = data[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(path + key, "must be a number")
    return float(v)


def _int_list(data, key, lo=1, path=""):
    v = data[key]
    if not isinstance(v, list) or not v or any(isinstance(e, bool) or not isinstance(e, int) for e in v):
        raise ConfigError(path + key, "must be a non-empty list of integers")
    if any(e < lo for e in v):
        raise ConfigError(path + key, f"every entry >= {lo}")
    return tuple(v)


def _check_keys(data, allowed, path):
    if not isinstance(data, dict):
        raise ConfigError(path.rstrip(".") or "config", "must be a JSON object")
    for key in data:
        if key not in allowed:
            raise ConfigError(path + key, "unknown key")


def _network(data) -> NetworkConfig:
    _check_keys(data, {"hidden", "activation"}, "network.")
    kw = {}
    if "hidden" in data:
        v = data["hidden"]
        if not isinstance(v, list) or any(isinstance(e, bool) or not isinstance(e, int) or e < 1 for e in v):
            raise ConfigError("network.hidden", "list of positive integers")
        kw["hidden"] = tuple(v)
    if "activation" in data:
        if data["activation"] not in ACTIVATIONS:
            raise ConfigError("network.activation", f"one of {', '.join(ACTIVATIONS)}")
        kw["activation"] = data["activation"]
    return NetworkConfig(**kw)


def _train(data, path="train.") -> TrainSettings:
    _check_keys(data, {"restarts", "steps", "lr", "mode", "spectral_cap"}, path)
    kw = {}
    for key in ("restarts", "steps"):
        if key in data:
            kw[key] = _int(data, key, 1, path)
    if "lr" in data:
        kw["lr"] = _num(data, "lr", path)
        if not kw["lr"] > 0:
            raise ConfigError(path + "lr", "lr > 0")
    if "mode" in data:
        if data["mode"] not in MODES:
            raise ConfigError(path + "mode", f"one of {', '.join(MODES)}")
        kw["mode"] = data["mode"]
    if data.get("spectral_cap") is not None:
        kw["spectral_cap"] = _num(data, "spectral_cap", path)
        if not kw["spectral_cap"] > 0:
            raise ConfigError(path + "spectral_cap", "spectral_cap > 0")
    return TrainSettings(**kw)


def _train_dict(t: TrainSettings) -> dict:
    return {"restarts": t.restarts, "steps": t.steps, "lr": t.lr, "mode": t.mode, "spectral_cap": t.spectral_cap}


@dataclass(frozen=True)
class ExperimentConfig:
    command: str
    seed: int = 0
    p: float = 2.0
    distribution: SamplingDistribution = field(default_factory=lambda: SamplingDistribution("uniform-cube", 1))
    target: TargetFunction = field(default_factory=lambda: TargetFunction("abs-offset"))
    network: NetworkConfig = field(default_factory=NetworkConfig)
    train: TrainSettings = field(default_factory=TrainSettings)
    N: Optional[int] = None
    Ns: Optional[tuple[int, ...]] = None
    widths: Optional[tuple[int, ...]] = None
    schedule: Optional[str] = None
    reps: int = 1
    M_ref: Optional[int] = None
    M_risk: int = 20_000
    N_floor: Optional[int] = None
    floor_train: Optional[TrainSettings] = None
    out_dir: str = "results"

    def to_dict(self) -> dict:
        return {
            "command": self.command, "seed": self.seed, "p": self.p,
            "distribution": self.distribution.to_dict(), "target": self.target.to_dict(),
            "network": self.network.to_dict(), "train": _train_dict(self.train),
            "N": self.N, "Ns": None if self.Ns is None else list(self.Ns),
            "widths": None if self.widths is None else list(self.widths), "schedule": self.schedule,
            "reps": self.reps, "M_ref": self.M_ref, "M_risk": self.M_risk, "N_floor": self.N_floor,
            "floor_train": None if self.floor_train is None else _train_dict(self.floor_train),
            "out_dir": self.out_dir,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        _check_keys(data, {f.name for f in fields(cls)}, "")
        if "command" not in data:
            raise ConfigError("command", "required")
        if data["command"] not in COMMANDS:
            raise ConfigError("command", f"one of {', '.join(COMMANDS)}")
        kw = {"command": data["command"]}
        if "seed" in data:
            kw["seed"] = _int(data, "seed", 0)
        if "p" in data:
            kw["p"] = _num(data, "p")
            if not kw["p"] >= 1:
                raise ConfigError("p", "p >= 1")
        if "distribution" in data:
            if not isinstance(data["distribution"], dict):
                raise ConfigError("distribution", "must be a JSON object")
            kw["distribution"] = SamplingDistribution.from_dict(data["distribution"])
        if "target" in data:
            if not isinstance(data["target"], dict):
                raise ConfigError("target", "must be a JSON object")
            kw["target"] = TargetFunction.from_dict(data["target"])
        if "network" in data:
            kw["network"] = _network(data["network"])
        if "train" in data:
            kw["train"] = _train(data["train"])
        if data.get("floor_train") is not None:
            kw["floor_train"] = _train(data["floor_train"], "floor_train.")
        for key, lo in (("N", 1), ("M_ref", 1), ("N_floor", 1)):
            if data.get(key) is not None:
                kw[key] = _int(data, key, lo)
        for key, lo in (("reps", 1), ("M_risk", 100)):
            if key in data:
                kw[key] = _int(data, key, lo)
        for key in ("Ns", "widths"):
            if data.get(key) is not None:
                kw[key] = _int_list(data, key)
        if data.get("schedule") is not None:
            if data["schedule"] != "square":
                raise ConfigError("schedule", "only 'square' is supported")
            kw["schedule"] = "square"
        if "out_dir" in data:
            if not isinstance(data["out_dir"], str):
                raise ConfigError("out_dir", "must be a string")
            kw["out_dir"] = data["out_dir"]
        return cls(**kw)

    def require(self, *keys: str) -> None:
        for key in keys:
            if getattr(self, key) is None:
                raise ConfigError(key, f"required for {self.command}")


def load_config(path) -> ExperimentConfig:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError("config", f"invalid JSON: {exc}") from None
    except OSError as exc:
        raise ConfigError("config", f"cannot read {path}: {exc.strerror}") from None
    return ExperimentConfig.from_dict(data)


def dump_config(cfg: ExperimentConfig, path) -> None:
    Path(path).write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n")
