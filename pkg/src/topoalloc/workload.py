"""Synthetic job streams and the NWP-prioritised waiting queue."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError


@dataclass
class Job:
    job_id: int
    requested_nodes: int
    processing_time: float
    estimated_time: float
    arrival_time: float = 0.0
    nwp: int = 0

    def __post_init__(self):
        if self.requested_nodes < 1:
            raise ConfigError(f"job {self.job_id} requests {self.requested_nodes} nodes")


def priority_key(job: Job):
    # larger NWP first, then fewer nodes; arrival and id only break ties
    return (-job.nwp, job.requested_nodes, job.arrival_time, job.job_id)


@dataclass
class WorkloadSpec:
    job_count: int = 300
    node_range: tuple[int, int] = (2, 40)
    time_range: tuple[float, float] = (10.0, 1800.0)
    arrival: str = "poisson"
    arrival_rate: float = 1 / 180  # about 80 % offered load on 128 nodes
    interval: float = 30.0
    estimate_factor: float = 1.0
    seed: int = 0

    def validate(self) -> None:
        if self.job_count < 0:
            raise ConfigError("job_count must be nonnegative")
        lo, hi = self.node_range
        if lo > hi or lo < 1:
            raise ConfigError(f"bad node_range {self.node_range}")
        lo, hi = self.time_range
        if lo > hi or lo <= 0:
            raise ConfigError(f"bad time_range {self.time_range}")
        if self.arrival not in ("poisson", "fixed"):
            raise ConfigError(f"unknown arrival model {self.arrival!r}")
        if self.arrival == "poisson" and self.arrival_rate <= 0:
            raise ConfigError("arrival_rate must be positive")
        if self.arrival == "fixed" and self.interval < 0:
            raise ConfigError("interval must be nonnegative")
        if self.estimate_factor <= 0:
            raise ConfigError("estimate_factor must be positive")


def generate_workload(spec: WorkloadSpec) -> list[Job]:
    """Draw ``spec.job_count`` jobs; node counts and processing times are
    uniform over the configured ranges and arrivals are nondecreasing."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    m = spec.job_count
    if m == 0:
        return []
    sizes = rng.integers(spec.node_range[0], spec.node_range[1] + 1, size=m)
    times = rng.uniform(spec.time_range[0], spec.time_range[1], size=m)
    if spec.time_range[0] == spec.time_range[1]:
        times[:] = spec.time_range[0]
    if spec.arrival == "poisson":
        gaps = rng.exponential(1.0 / spec.arrival_rate, size=m)
        gaps[0] = 0.0
    else:
        gaps = np.full(m, float(spec.interval))
        gaps[0] = 0.0
    arrivals = np.cumsum(gaps)
    return [
        Job(
            job_id=i,
            requested_nodes=int(sizes[i]),
            processing_time=float(times[i]),
            estimated_time=float(times[i]) * spec.estimate_factor,
            arrival_time=float(arrivals[i]),
        )
        for i in range(m)
    ]


def select_window(queue: Sequence[Job], idle_count: int) -> tuple[list[Job], list[Job]]:
    """Greedy priority scan: take every job that still fits.

    Jobs that do not fit are deferred and their NWP counter is incremented in
    place.
    """
    if idle_count < 0:
        raise ValueError("idle_count must be nonnegative")
    selected, deferred = [], []
    remaining = idle_count
    for job in sorted(queue, key=priority_key):
        if job.requested_nodes <= remaining:
            selected.append(job)
            remaining -= job.requested_nodes
        else:
            deferred.append(job)
    for job in deferred:
        job.nwp += 1
    return selected, deferred


class WaitingQueue:
    """Jobs waiting for allocation, iterated in priority order."""

    def __init__(self, jobs: Iterable[Job] = ()):
        self._jobs: list[Job] = list(jobs)

    def push(self, job: Job) -> None:
        self._jobs.append(job)

    def remove(self, jobs: Iterable[Job]) -> None:
        gone = {j.job_id for j in jobs}
        self._jobs = [j for j in self._jobs if j.job_id not in gone]

    def ordered(self) -> list[Job]:
        return sorted(self._jobs, key=priority_key)

    def __len__(self):
        return len(self._jobs)

    def __iter__(self):
        return iter(self.ordered())


_FIELDS = ("job_id", "arrival_time", "requested_nodes", "processing_time", "estimated_time")


def save_workload(jobs: Iterable[Job], path: str | Path) -> None:
    with open(path, "w") as fh:
        for job in jobs:
            rec = asdict(job)
            fh.write(json.dumps({k: rec[k] for k in _FIELDS}) + "\n")


def load_workload(path: str | Path) -> list[Job]:
    jobs = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                jobs.append(Job(**json.loads(line)))
    return jobs
