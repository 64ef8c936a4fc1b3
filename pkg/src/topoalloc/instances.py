"""Random single-window allocation instances.

An instance is a partially busy cluster plus a batch of jobs to place on its
idle nodes. The window scheduler selects as many queued jobs as fit, so the
batch is drawn first and the number of idle nodes is then sized to make the
jobs fill 80-100 % of them. Busy nodes come in short contiguous runs, as
left behind by earlier contiguous allocations.

The default is desk scale: a full 8-ary tree (128 nodes), 8-12 jobs of 2-8
nodes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .allocation import IdleSequence
from .exact import ScasModel
from .topology import DEFAULT_HOP_COST, FatTree
from .workload import Job


@dataclass(frozen=True)
class InstanceDistribution:
    radix: int = 8
    pod_count: int = 8
    job_count: tuple[int, int] = (8, 12)
    node_range: tuple[int, int] = (2, 8)
    fill: tuple[float, float] = (0.8, 1.0)
    busy_run: int = 4
    c: float = DEFAULT_HOP_COST

    @property
    def tree(self) -> FatTree:
        return FatTree(self.radix, self.pod_count)

    @property
    def n_max(self) -> int:
        return self.node_range[1]


def sample_instance(dist: InstanceDistribution, rng: np.random.Generator) -> ScasModel:
    tree = dist.tree
    total = tree.node_count
    m = int(rng.integers(dist.job_count[0], dist.job_count[1] + 1))
    sizes = rng.integers(dist.node_range[0], dist.node_range[1] + 1, size=m)
    # drop trailing jobs the cluster cannot hold at all
    while m and sizes[:m].sum() > total:
        m -= 1
    sizes = sizes[:m]
    need = int(sizes.sum())
    idle_count = min(total, max(need, math.ceil(need / rng.uniform(*dist.fill))))

    busy = np.zeros(total, dtype=bool)
    target = total - idle_count
    placed = 0
    while placed < target:
        run = int(rng.integers(1, dist.busy_run + 1))
        start = int(rng.integers(total))
        for i in range(run):
            v = (start + i) % total
            if placed < target and not busy[v]:
                busy[v] = True
                placed += 1
    idle = IdleSequence(tuple(np.flatnonzero(~busy).tolist()))
    jobs = [Job(job_id=i, requested_nodes=int(s), processing_time=1.0, estimated_time=1.0)
            for i, s in enumerate(sizes)]
    return ScasModel(jobs, idle, tree, dist.c)


def sample_instances(dist: InstanceDistribution, count: int, seed: int) -> list[ScasModel]:
    rng = np.random.default_rng(seed)
    return [sample_instance(dist, rng) for _ in range(count)]
