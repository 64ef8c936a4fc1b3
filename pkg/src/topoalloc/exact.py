"""Exact solvers for the static-continuity (SCAS) allocation model.

Each selected job picks one start position in the frozen idle sequence and
occupies the window that starts there; windows must be pairwise disjoint and
the total CH cost is minimised.

``solve_csp_dp`` is the production solver. It walks the sequence left to
right as a constrained shortest path: a transition arc skips one position at
zero cost, and an operation arc for request size ``r`` covers ``r``
consecutive positions at the window's CH cost. A path must use exactly
``demand[r]`` operation arcs of every size. Operation arcs never wrap.

``solve_scas_bruteforce`` enumerates every tuple of start positions and is
only meant as a test oracle for small instances.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .allocation import (AllocationPlan, IdleSequence, all_window_costs,
                         make_plan, window_nodes)
from .errors import InfeasibleError
from .topology import DEFAULT_HOP_COST, FatTree
from .workload import Job


@dataclass
class ScasModel:
    jobs: list[Job]
    idle: IdleSequence
    tree: FatTree
    c: float = DEFAULT_HOP_COST

    @property
    def demand_total(self) -> int:
        return sum(j.requested_nodes for j in self.jobs)


@dataclass
class CspGraph:
    n: int
    transition_arcs: list[tuple[int, int]]
    # size -> list of (first position, last position, weight)
    operation_arcs: dict[int, list[tuple[int, int, float]]]
    demand: dict[int, int]
    jobs: list[Job] = field(default_factory=list)
    idle: IdleSequence = field(default_factory=lambda: IdleSequence(()))
    tree: FatTree | None = None
    c: float = DEFAULT_HOP_COST


def _job_window_costs(model: ScasModel, wrap: bool) -> dict[int, np.ndarray]:
    costs = {}
    for r in {j.requested_nodes for j in model.jobs}:
        if r > len(model.idle):
            costs[r] = np.array([])
        elif r == 1:
            costs[r] = np.zeros(len(model.idle) if wrap else len(model.idle))
        else:
            costs[r] = all_window_costs(model.tree, model.idle, r, model.c, wrap=wrap)
    return costs


def solve_scas_bruteforce(model: ScasModel, wrap: bool = True) -> AllocationPlan:
    """Minimum-cost disjoint placement by full enumeration.

    Ties go to the lexicographically smallest tuple of start positions, in the
    order of ``model.jobs``.
    """
    if not model.jobs:
        return AllocationPlan({}, 0.0)
    length = len(model.idle)
    costs = _job_window_costs(model, wrap)
    sizes = [j.requested_nodes for j in model.jobs]
    choices = [range(len(costs[r])) for r in sizes]
    windows = {
        (r, s): frozenset((s + i) % length for i in range(r))
        for r in set(sizes) for s in range(len(costs[r]))
    }
    best, best_cost = None, math.inf
    for starts in itertools.product(*choices):
        used: set[int] = set()
        ok = True
        for r, s in zip(sizes, starts):
            w = windows[r, s]
            if used.intersection(w):
                ok = False
                break
            used |= w
        if not ok:
            continue
        total = math.fsum(costs[r][s] for r, s in zip(sizes, starts))
        if total < best_cost:
            best, best_cost = starts, total
    if best is None:
        raise InfeasibleError("no disjoint placement exists")
    return make_plan(model.tree, {
        j.job_id: window_nodes(model.idle, s, j.requested_nodes)
        for j, s in zip(model.jobs, best)
    }, model.c)


def build_csp(model: ScasModel) -> CspGraph:
    n = len(model.idle)
    transitions = [(i, i + 1) for i in range(n - 1)]
    demand: dict[int, int] = {}
    for job in model.jobs:
        demand[job.requested_nodes] = demand.get(job.requested_nodes, 0) + 1
    costs = _job_window_costs(model, wrap=False)
    ops = {
        r: [(i, i + r - 1, float(costs[r][i])) for i in range(len(costs[r]))]
        for r in sorted(demand)
    }
    return CspGraph(n, transitions, ops, demand, list(model.jobs), model.idle,
                    model.tree, model.c)


def dp_state_bound(graph: CspGraph) -> int:
    return graph.n * math.prod(e + 1 for e in graph.demand.values())


def solve_csp_dp(graph: CspGraph) -> AllocationPlan:
    """Shortest path through the CSP graph that uses every demanded arc.

    State ``(p, remaining)``: positions before ``p`` are decided and
    ``remaining[k]`` arcs of the k-th size are still owed. Taking an operation
    arc of size ``r`` at ``p`` moves to ``p + r``, so consecutive windows can
    never share a position. Among optimal paths the one whose arcs start
    earliest is returned.
    """
    sizes = sorted(graph.demand)
    full = tuple(graph.demand[r] for r in sizes)
    n = graph.n
    if sum(r * e for r, e in zip(sizes, full)) > n:
        raise InfeasibleError("demand exceeds the idle sequence")
    if not sizes:
        return AllocationPlan({}, 0.0)
    weight = {r: [w for _, _, w in graph.operation_arcs[r]] for r in sizes}

    # cost-to-go: best[p][remaining]; computed right to left, then the
    # decisions are replayed forward from (0, full)
    zero = tuple(0 for _ in sizes)
    best: list[dict[tuple[int, ...], float]] = [dict() for _ in range(n + 1)]
    best[n][zero] = 0.0
    reachable = _reachable_states(sizes, full, n)
    visited = 0
    for p in range(n - 1, -1, -1):
        nxt = best[p + 1]
        cur = best[p]
        for rem in reachable[p]:
            visited += 1
            value = nxt.get(rem, math.inf)
            for k, r in enumerate(sizes):
                if rem[k] and p + r <= n:
                    after = rem[:k] + (rem[k] - 1,) + rem[k + 1:]
                    tail = best[p + r].get(after, math.inf)
                    cand = weight[r][p] + tail
                    if cand < value:
                        value = cand
            if value < math.inf:
                cur[rem] = value
    assert visited <= dp_state_bound(graph)
    if full not in best[0]:
        raise InfeasibleError("no path satisfies the demand")

    chosen: dict[int, list[int]] = {r: [] for r in sizes}
    p, rem = 0, full
    while rem != zero:
        target = best[p][rem]
        moved = False
        for k, r in enumerate(sizes):
            if rem[k] and p + r <= n:
                after = rem[:k] + (rem[k] - 1,) + rem[k + 1:]
                tail = best[p + r].get(after)
                if tail is not None and weight[r][p] + tail == target:
                    chosen[r].append(p)
                    p, rem = p + r, after
                    moved = True
                    break
        if not moved:
            p += 1

    assignments = {}
    for r in sizes:
        jobs_r = [j for j in graph.jobs if j.requested_nodes == r]
        for job, start in zip(jobs_r, chosen[r]):
            assignments[job.job_id] = window_nodes(graph.idle, start, r)
    return make_plan(graph.tree, assignments, graph.c)


def _reachable_states(sizes: Sequence[int], full: tuple[int, ...], n: int):
    """Remaining-demand vectors that can occur at each position."""
    states = [set() for _ in range(n + 1)]
    states[0].add(full)
    for p in range(n):
        for rem in states[p]:
            states[p + 1].add(rem)
            for k, r in enumerate(sizes):
                if rem[k] and p + r <= n:
                    states[p + r].add(rem[:k] + (rem[k] - 1,) + rem[k + 1:])
    return [sorted(s) for s in states]


def solve_scas(model: ScasModel) -> AllocationPlan:
    return solve_csp_dp(build_csp(model))
