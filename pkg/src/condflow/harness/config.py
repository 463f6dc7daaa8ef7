"""Experiment configuration: one JSON document describes a full run."""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, fields
from pathlib import Path

from ..errors import CondFlowError, ConfigError
from ..flowmatch import TrainConfig
from ..nn.config import ModelConfig
from ..sampler import SamplerConfig
from ..synth import TASKS, DataConfig

_SAFE_ID = re.compile(r"^[A-Za-z0-9][A-Za-z0-9._+-]*$")


@dataclass
class ExperimentConfig:
    experiment_id: str
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    sampler: SamplerConfig = field(default_factory=lambda: SamplerConfig(method="midpoint", steps=8))
    data: DataConfig = field(default_factory=DataConfig)
    eval_every: int = 100
    eval_set_size: int = 64
    eval_seed: int = 12345
    eval_tasks: list | None = None  # default: the tasks with positive training weight
    eval_scales: list = field(default_factory=list)  # extra guidance scales evaluated alongside sampler.cfg_scale
    samples_per_epoch: int = 1024  # nominal epoch size for converting steps to epochs
    init_from: str | None = None  # checkpoint to continue from, relative to the output directory
    output_dir: str = "."  # run directory, relative to the output directory

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if not isinstance(self.experiment_id, str) or not _SAFE_ID.match(self.experiment_id):
            raise ConfigError(f"experiment_id: must be a nonempty filesystem-safe name, got {self.experiment_id!r}")
        for name in ("eval_every", "eval_set_size", "samples_per_epoch"):
            v = getattr(self, name)
            if not isinstance(v, int) or isinstance(v, bool) or v < 1:
                raise ConfigError(f"{name}: must be a positive integer, got {v!r}")
        if self.train.total_steps > 0 and self.eval_every > self.train.total_steps:
            raise ConfigError(f"eval_every: {self.eval_every} exceeds train.total_steps={self.train.total_steps}")
        if self.eval_set_size < 2:
            raise ConfigError("eval_set_size: need at least 2 items for the Fréchet statistic")
        if self.eval_tasks is not None:
            if not self.eval_tasks or any(t not in TASKS for t in self.eval_tasks):
                raise ConfigError(f"eval_tasks: must be a nonempty subset of {TASKS}, got {self.eval_tasks!r}")
        if any((not isinstance(g, (int, float))) or g < 0 for g in self.eval_scales):
            raise ConfigError(f"eval_scales: must be non-negative numbers, got {self.eval_scales!r}")
        m, d = self.model, self.data
        for name in ("T_a", "D_a", "D_v"):
            if getattr(m, name) != getattr(d, name):
                raise ConfigError(f"model.{name}={getattr(m, name)} does not match data.{name}={getattr(d, name)}")

    @property
    def tasks(self) -> list[str]:
        return list(self.eval_tasks) if self.eval_tasks is not None else self.train.active_tasks

    @property
    def task_mix_id(self) -> str:
        return "+".join(self.train.active_tasks)

    def run_dir(self, output_root) -> Path:
        return Path(output_root) / self.output_dir

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            out[f.name] = v.to_dict() if hasattr(v, "to_dict") else (list(v) if isinstance(v, tuple) else v)
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown fields: {sorted(unknown)}")
        if "experiment_id" not in d:
            raise ConfigError("experiment_id: required")
        kw = dict(d)
        parsers = {"model": ModelConfig.from_dict, "train": TrainConfig.from_dict,
                   "sampler": SamplerConfig.from_dict, "data": DataConfig.from_dict}
        for name, parse in parsers.items():
            if name in kw:
                if not isinstance(kw[name], dict):
                    raise ConfigError(f"{name}: must be an object")
                try:
                    kw[name] = parse(kw[name])
                except ConfigError as exc:
                    raise ConfigError(f"{name}.{exc}") from exc
                except TypeError as exc:
                    raise ConfigError(f"{name}: {exc}") from exc
        try:
            return cls(**kw)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc


def load_config(path) -> ExperimentConfig:
    try:
        raw = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    try:
        return ExperimentConfig.from_dict(raw)
    except ConfigError:
        raise
    except CondFlowError as exc:
        raise ConfigError(str(exc)) from exc
