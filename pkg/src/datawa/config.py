"""Experiment configuration: one JSON or TOML file plus dotted overrides.

Sections and their keys::

    [workload]   WorkloadConfig fields
    [engine]     speed_kmh, max_len, threshold, batch_window
    [demand]     DemandConfig fields plus epochs, lr, batch_size, init_scale,
                 history_seeds, val_seeds
    [tvf]        TVFHyper fields plus experience_seeds, instance_workers,
                 instance_tasks
    [bench]      strategies, seeds, axis, values

Unknown keys are rejected so typos surface early.
"""

from __future__ import annotations

import copy
import json
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any

from .core import TravelModel
from .ddgnn import DemandConfig, TrainHyper
from .engine import EngineConfig
from .search_tvf import TVFHyper
from .workload import WorkloadConfig

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


class ConfigFileError(ValueError):
    pass


DEFAULTS: dict[str, dict[str, Any]] = {
    "workload": WorkloadConfig().to_dict(),
    "engine": {"speed_kmh": 40.0, "max_len": 4, "threshold": 0.85, "batch_window": 0.0},
    "demand": {
        "P": 4, "embed_dim": 8, "channels": 4, "kernel": 3, "dilations": [1, 2],
        "alpha": 0.5, "hops": 3,
        "epochs": 40, "lr": 1.0, "batch_size": 4, "init_scale": 1.0,
        "history_seeds": list(range(1000, 1012)), "val_seeds": list(range(2000, 2004)),
    },
    "tvf": {
        "hidden": 32, "epochs": 100, "batch_size": 64, "lr": 0.01, "momentum": 0.9,
        "holdout": 0.1,
        "experience_seeds": list(range(100, 106)),
        "instance_workers": 4, "instance_tasks": 8,
    },
    "bench": {
        "strategies": ["Greedy", "FTA", "DTA", "DTA_TP", "DATA-WA"],
        "seeds": list(range(20)), "axis": "", "values": [],
    },
}


def _merge(base: dict, extra: dict, where: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, val in extra.items():
        path = f"{where}.{key}" if where else key
        if key not in out:
            raise ConfigFileError(f"unknown config key {path!r}")
        if isinstance(out[key], dict):
            if not isinstance(val, dict):
                raise ConfigFileError(f"{path!r} must be a table")
            out[key] = _merge(out[key], val, path)
        else:
            out[key] = val
    return out


def parse_value(text: str) -> Any:
    """Override values are JSON when they parse as JSON, otherwise plain strings."""
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_override(raw: dict, assignment: str) -> dict:
    if "=" not in assignment:
        raise ConfigFileError(f"override {assignment!r} is not key=value")
    key, text = assignment.split("=", 1)
    parts = key.strip().split(".")
    nested: Any = parse_value(text)
    for p in reversed(parts):
        nested = {p: nested}
    return _merge(raw, nested)


@dataclass
class ExperimentConfig:
    raw: dict = field(default_factory=lambda: copy.deepcopy(DEFAULTS))

    @classmethod
    def load(cls, path: str | Path | None = None, overrides: list[str] = ()) -> "ExperimentConfig":
        raw = copy.deepcopy(DEFAULTS)
        if path is not None:
            p = Path(path)
            try:
                text = p.read_bytes()
            except OSError as exc:
                raise ConfigFileError(f"{p}: {exc.strerror}") from None
            try:
                data = tomllib.loads(text.decode()) if p.suffix == ".toml" else json.loads(text)
            except (tomllib.TOMLDecodeError, json.JSONDecodeError) as exc:
                raise ConfigFileError(f"{p}: {exc}") from None
            raw = _merge(raw, data)
        for o in overrides:
            raw = apply_override(raw, o)
        return cls(raw)

    def with_seed(self, seed: int) -> "ExperimentConfig":
        return ExperimentConfig(apply_override(self.raw, f"workload.seed={int(seed)}"))

    def to_dict(self) -> dict:
        return copy.deepcopy(self.raw)

    @property
    def workload(self) -> WorkloadConfig:
        return WorkloadConfig.from_dict(self.raw["workload"])

    @property
    def engine(self) -> EngineConfig:
        e, w = self.raw["engine"], self.workload
        return EngineConfig(model=TravelModel(float(e["speed_kmh"]) / 3600.0),
                            max_len=int(e["max_len"]), grid=w.grid, k=w.k, dt=w.dt,
                            threshold=float(e["threshold"]), task_valid=w.task_valid,
                            t0=w.t_start, batch_window=float(e["batch_window"]))

    @property
    def demand(self) -> DemandConfig:
        d, w = self.raw["demand"], self.workload
        return DemandConfig(k=w.k, P=int(d["P"]), n_cells=w.rows * w.cols,
                            embed_dim=int(d["embed_dim"]), channels=int(d["channels"]),
                            kernel=int(d["kernel"]), dilations=tuple(int(x) for x in d["dilations"]),
                            alpha=float(d["alpha"]), hops=int(d["hops"]))

    def demand_hyper(self, seed: int = 0) -> TrainHyper:
        d = self.raw["demand"]
        return TrainHyper(epochs=int(d["epochs"]), lr=float(d["lr"]),
                          batch_size=int(d["batch_size"]), seed=int(seed),
                          init_scale=float(d["init_scale"]))

    def tvf_hyper(self, seed: int = 0) -> TVFHyper:
        t = self.raw["tvf"]
        names = {f.name for f in fields(TVFHyper)} - {"seed"}
        return TVFHyper(seed=int(seed), **{k: t[k] for k in names})
