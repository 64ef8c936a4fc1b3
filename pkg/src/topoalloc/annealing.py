"""Simulated annealing over dynamic-continuity (DCAS) solutions.

A solution is an ordered list of placements. Each placement records a job and
the identifier of the first node of its window; replaying the list against
the initial idle sequence (removing every window after it is taken) yields
the node sets. When an earlier job is destroyed its nodes return to the
sequence, and a surviving placement whose first node has become busy
resolves to the next idle node instead.

A move removes one to ``max_remove`` random jobs and hands them to a repair
operator, which appends them again in descending order of size. Neural
repair lives in :mod:`topoalloc.neural` and plugs in through the same
``RepairOperator`` signature.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from .allocation import (AllocationPlan, IdleSequence, best_window,
                         dcas_allocate, job_cost)
from .errors import CapacityError, InfeasibleError
from .exact import ScasModel
from .workload import Job, priority_key


@dataclass(frozen=True)
class SaParams:
    t_max_temp: float = 2500.0
    t_min_temp: float = 2.5
    max_iters: int = 500
    max_remove: int = 2

    def __post_init__(self):
        if not 0 < self.t_min_temp < self.t_max_temp:
            raise ValueError("need 0 < t_min_temp < t_max_temp")
        if self.max_remove < 1:
            raise ValueError("max_remove must be >= 1")
        if self.max_iters < 0:
            raise ValueError("max_iters must be >= 0")

    @property
    def cooling_factor(self) -> float:
        return -math.log(self.t_max_temp / self.t_min_temp)


def temperature(params: SaParams, t: int) -> float:
    """Exponential schedule: ``t_max_temp`` at t=0, ``t_min_temp`` at
    t=max_iters."""
    if params.max_iters == 0:
        return params.t_max_temp
    return params.t_max_temp * math.exp(params.cooling_factor * t / params.max_iters)


def acceptance_probability(current_cost: float, candidate_cost: float, temp: float) -> float:
    if candidate_cost <= current_cost:
        return 1.0
    return math.exp((current_cost - candidate_cost) / temp)


class Placement(NamedTuple):
    job: Job
    start_node: int


@dataclass
class SaSolution:
    model: ScasModel
    placements: tuple[Placement, ...] = ()
    assignments: dict[int, tuple[int, ...]] = field(default_factory=dict)
    job_costs: dict[int, float] = field(default_factory=dict)
    # prefix[i] is the idle sequence seen by placement i; prefix[-1] is what
    # is left after the last one
    prefix: tuple[IdleSequence, ...] = ()

    @property
    def idle(self) -> IdleSequence:
        return self.prefix[-1] if self.prefix else self.model.idle

    @property
    def cost(self) -> float:
        return math.fsum(self.job_costs.values())

    @property
    def plan(self) -> AllocationPlan:
        return AllocationPlan(dict(self.assignments), self.cost)

    @property
    def jobs(self) -> list[Job]:
        return [p.job for p in self.placements]


RepairOperator = Callable[[SaSolution, list, np.random.Generator], SaSolution]


def empty_solution(model: ScasModel) -> SaSolution:
    return SaSolution(model, (), {}, {}, (model.idle,))


def place(sol: SaSolution, job: Job, pos: int) -> SaSolution:
    """Append ``job`` at position ``pos`` of the current idle sequence."""
    q = sol.idle
    if job.requested_nodes > len(q):
        raise InfeasibleError(f"job {job.job_id} needs {job.requested_nodes} nodes, "
                              f"{len(q)} idle")
    nodes, rest = dcas_allocate(q, pos, job.requested_nodes)
    model = sol.model
    assignments = dict(sol.assignments)
    assignments[job.job_id] = nodes
    costs = dict(sol.job_costs)
    costs[job.job_id] = job_cost(model.tree, nodes, model.c)
    return SaSolution(model, sol.placements + (Placement(job, nodes[0]),),
                      assignments, costs, sol.prefix + (rest,))


def replay(model: ScasModel, placements, base: SaSolution | None = None) -> SaSolution:
    """Rebuild a solution by applying ``placements`` in order.

    ``base`` is an already-built solution to continue from.
    """
    sol = base if base is not None else empty_solution(model)
    for pl in placements:
        q = sol.idle
        if pl.job.requested_nodes > len(q):
            raise CapacityError("replay ran out of idle nodes")
        sol = place(sol, pl.job, q.successor_position(pl.start_node))
    return sol


def truncate(sol: SaSolution, k: int) -> SaSolution:
    """The solution made of the first ``k`` placements of ``sol``."""
    kept = sol.placements[:k]
    ids = {p.job.job_id for p in kept}
    return SaSolution(sol.model, kept,
                      {j: v for j, v in sol.assignments.items() if j in ids},
                      {j: v for j, v in sol.job_costs.items() if j in ids},
                      sol.prefix[:k + 1])


def initial_solution(model: ScasModel, strict: bool = False) -> SaSolution:
    """Sequential SCAS greedy: in priority order each job takes the cheapest
    window of the frozen sequence that avoids nodes already taken.

    A job left without any free static window raises ``InfeasibleError`` when
    ``strict``; otherwise it takes the cheapest window of the sequence with
    all earlier jobs removed.
    """
    q = model.idle
    if model.demand_total > len(q):
        raise InfeasibleError("selected jobs exceed the idle nodes")
    occupied: set[int] = set()
    sol = empty_solution(model)
    for job in sorted(model.jobs, key=priority_key):
        n = job.requested_nodes
        try:
            pos = best_window(model.tree, q, n, model.c, occupied)
        except InfeasibleError:
            if strict:
                raise
            pos = best_window(model.tree, sol.idle, n, model.c)
            sol = place(sol, job, pos)
        else:
            # a free static window is still contiguous once earlier windows
            # leave the sequence, so it is a valid dynamic placement too
            start = q[pos]
            sol = place(sol, job, sol.idle.position(start))
            assert set(sol.assignments[job.job_id]) == {q[(pos + i) % len(q)] for i in range(n)}
        occupied.update(sol.assignments[job.job_id])
    return sol


def destroy(sol: SaSolution, params: SaParams, rng: np.random.Generator):
    """Remove between 1 and ``max_remove`` uniformly chosen jobs."""
    count = len(sol.placements)
    if count == 0:
        raise ValueError("cannot destroy an empty solution")
    m = int(rng.integers(1, min(params.max_remove, count) + 1))
    gone = sorted(int(i) for i in rng.choice(count, size=m, replace=False))
    removed = [sol.placements[i].job for i in gone]
    keep = set(range(count)) - set(gone)
    first = gone[0]
    survivors = [sol.placements[i] for i in range(first, count) if i in keep]
    partial = replay(sol.model, survivors, base=truncate(sol, first))
    return partial, removed


def repair_order(removed) -> list[Job]:
    return sorted(removed, key=lambda j: (-j.requested_nodes, j.job_id))


def repair_random(partial: SaSolution, removed, rng: np.random.Generator) -> SaSolution:
    """Reinsert jobs (largest first) at uniformly random start positions."""
    sol = partial
    for job in repair_order(removed):
        if job.requested_nodes > len(sol.idle):
            raise InfeasibleError(f"no room to reinsert job {job.job_id}")
        sol = place(sol, job, int(rng.integers(len(sol.idle))))
    return sol


def repair_greedy(partial: SaSolution, removed, rng: np.random.Generator | None = None) -> SaSolution:
    """Reinsert jobs (largest first) at their cheapest start position."""
    sol = partial
    model = partial.model
    for job in repair_order(removed):
        if job.requested_nodes > len(sol.idle):
            raise InfeasibleError(f"no room to reinsert job {job.job_id}")
        sol = place(sol, job, best_window(model.tree, sol.idle, job.requested_nodes, model.c))
    return sol


class TraceRecord(NamedTuple):
    t: int
    temperature: float
    cost: float
    best: float


def anneal(model: ScasModel, params: SaParams, repair: RepairOperator,
           rng: np.random.Generator, initial: SaSolution | None = None,
           trace: list | None = None) -> SaSolution:
    """Run ``params.max_iters`` destroy/repair moves with Metropolis
    acceptance and return the best solution seen."""
    x = initial if initial is not None else initial_solution(model)
    best = x
    if not x.placements:
        return x
    x_cost = best_cost = x.cost
    for t in range(params.max_iters):
        temp = temperature(params, t)
        partial, removed = destroy(x, params, rng)
        try:
            cand = repair(partial, removed, rng)
        except InfeasibleError:
            if trace is not None:
                trace.append(TraceRecord(t, temp, x_cost, best_cost))
            continue
        cand_cost = cand.cost
        if cand_cost <= x_cost or rng.random() < acceptance_probability(x_cost, cand_cost, temp):
            x, x_cost = cand, cand_cost
        if x_cost < best_cost:
            best, best_cost = x, x_cost
        if trace is not None:
            trace.append(TraceRecord(t, temp, x_cost, best_cost))
    return best

