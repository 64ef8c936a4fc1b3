"""Experiment configuration files (YAML).

Every section is optional; defaults are the values used throughout the
package (hop cost 1000, annealing 2500 -> 2.5 over 500 iterations with at most
two jobs removed per move, 100 state rows, 60 s periods).

Example::

    seed: 7
    topology: {radix: 8, pod_count: 8, c: 1000}
    workload: {job_count: 300, node_range: [2, 16], arrival_rate: 0.0125}
    solver:
      scheduler: WindowNSA
      tau: 60
      policy: runs/train/policy.bin
      compare: [seq, sa-500, sa-1000]
      improvement_baseline: sa-1000
      sa: {max_iters: 500}
    simulation: {epochs: 10, instances_per_epoch: 100}
    training: {arch: CNN-3, ppo: {updates: 200}}
    output: {dir: runs/nsa}
"""
from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any

import yaml

from .annealing import SaParams
from .errors import ConfigError
from .instances import InstanceDistribution
from .neural.networks import ARCHITECTURES
from .neural.ppo import PpoConfig
from .simulator import SchedulerKind, SimulationConfig
from .topology import DEFAULT_HOP_COST, FatTree
from .workload import WorkloadSpec


@dataclass
class TopologySection:
    radix: int = 8
    pod_count: int | None = None
    c: float = DEFAULT_HOP_COST


@dataclass
class SolverSection:
    scheduler: str = "WindowSA"
    tau: float = 60.0
    sa: dict = field(default_factory=dict)
    policy: str | None = None
    n_max: int | None = None
    compare: list = field(default_factory=list)
    improvement_baseline: str | None = None


@dataclass
class SimulationSection:
    epochs: int = 10
    instances_per_epoch: int | None = None
    patience: int = 10


@dataclass
class TrainingSection:
    arch: str = "CNN-3"
    init_policy: str | None = None
    ppo: dict = field(default_factory=dict)
    instances: dict = field(default_factory=dict)


@dataclass
class OutputSection:
    dir: str = "runs/default"
    verbosity: int = 1


@dataclass
class ExperimentConfig:
    seed: int = 0
    topology: TopologySection = field(default_factory=TopologySection)
    workload: dict = field(default_factory=dict)
    solver: SolverSection = field(default_factory=SolverSection)
    simulation: SimulationSection = field(default_factory=SimulationSection)
    training: TrainingSection = field(default_factory=TrainingSection)
    output: OutputSection = field(default_factory=OutputSection)

    def to_dict(self) -> dict:
        return asdict(self)

    def digest(self) -> str:
        """Hash of everything that affects results (output settings excluded)."""
        data = self.to_dict()
        data.pop("output")
        raw = json.dumps(data, sort_keys=True, default=str).encode()
        return hashlib.sha256(raw).hexdigest()

    # -- typed views -------------------------------------------------------

    def tree(self) -> FatTree:
        try:
            return FatTree(self.topology.radix, self.topology.pod_count)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def sa_params(self) -> SaParams:
        return _build(SaParams, self.solver.sa, "solver.sa")

    def workload_spec(self) -> WorkloadSpec:
        data = dict(self.workload)
        for key in ("node_range", "time_range"):
            if key in data:
                data[key] = tuple(data[key])
        data.setdefault("seed", self.seed)
        spec = _build(WorkloadSpec, data, "workload")
        spec.validate()
        return spec

    def ppo_config(self) -> PpoConfig:
        data = {"seed": self.seed, **self.training.ppo}
        return _build(PpoConfig, data, "training.ppo")

    def instance_distribution(self) -> InstanceDistribution:
        data = dict(self.training.instances)
        data.setdefault("radix", self.topology.radix)
        data.setdefault("pod_count", self.topology.pod_count or self.topology.radix)
        data.setdefault("c", self.topology.c)
        for key in ("job_count", "node_range", "fill"):
            if key in data:
                data[key] = tuple(data[key])
        return _build(InstanceDistribution, data, "training.instances")

    def simulation_config(self) -> SimulationConfig:
        try:
            kind = SchedulerKind(self.solver.scheduler)
        except ValueError:
            raise ConfigError(f"unknown scheduler {self.solver.scheduler!r}") from None
        return SimulationConfig(
            radix=self.topology.radix,
            pod_count=self.topology.pod_count,
            c=self.topology.c,
            scheduler=kind,
            tau=self.solver.tau,
            sa=self.sa_params(),
            compare=list(self.solver.compare),
            workload=self.workload_spec(),
            epochs=self.simulation.epochs,
            instances_per_epoch=self.simulation.instances_per_epoch,
            patience=self.simulation.patience,
            seed=self.seed,
            n_max=self.solver.n_max,
        )

    def validate(self) -> None:
        self.tree()
        if self.topology.c <= 0:
            raise ConfigError("topology.c must be positive")
        if self.solver.tau <= 0:
            raise ConfigError("solver.tau must be positive")
        if self.simulation.epochs < 0:
            raise ConfigError("simulation.epochs must be nonnegative")
        if self.training.arch not in ARCHITECTURES:
            raise ConfigError(f"unknown architecture {self.training.arch!r}")
        self.sa_params()
        self.workload_spec()
        self.ppo_config()
        self.simulation_config()


def _build(cls, data: dict, where: str):
    names = {f.name for f in fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
    try:
        return cls(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


_SECTIONS = {
    "topology": TopologySection,
    "solver": SolverSection,
    "simulation": SimulationSection,
    "training": TrainingSection,
    "output": OutputSection,
}


def config_from_dict(raw: dict) -> ExperimentConfig:
    raw = copy.deepcopy(raw or {})
    unknown = set(raw) - {"seed", "workload", *_SECTIONS}
    if unknown:
        raise ConfigError(f"unknown config sections {sorted(unknown)}")
    kwargs: dict[str, Any] = {}
    if "seed" in raw:
        kwargs["seed"] = int(raw["seed"])
    if "workload" in raw:
        kwargs["workload"] = dict(raw["workload"] or {})
    for name, cls in _SECTIONS.items():
        if name in raw:
            kwargs[name] = _build(cls, dict(raw[name] or {}), name)
    cfg = ExperimentConfig(**kwargs)
    cfg.validate()
    return cfg


def apply_override(raw: dict, assignment: str) -> None:
    """Apply ``a.b.c=value`` (value parsed as YAML) to a raw config dict."""
    if "=" not in assignment:
        raise ConfigError(f"override {assignment!r} is not key=value")
    key, value = assignment.split("=", 1)
    node = raw
    parts = key.strip().split(".")
    for part in parts[:-1]:
        node = node.setdefault(part, {})
        if not isinstance(node, dict):
            raise ConfigError(f"override {key!r} descends into a scalar")
    node[parts[-1]] = yaml.safe_load(value)


def load_config(path: str | Path | None = None, overrides=()) -> ExperimentConfig:
    raw: dict = {}
    if path is not None:
        try:
            raw = yaml.safe_load(Path(path).read_text()) or {}
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except yaml.YAMLError as exc:
            raise ConfigError(f"bad YAML in {path}: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError(f"{path} must hold a mapping")
    for item in overrides:
        apply_override(raw, item)
    return config_from_dict(raw)
