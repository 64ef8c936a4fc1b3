"""Discrete-time cluster simulation.

Window mode wakes up every ``tau`` seconds, selects queued jobs by priority
and solves one allocation problem for all of them. Per-job mode (FCFS and
EASY backfilling) reacts to every arrival and completion and places each job
on its cheapest window of the live idle sequence.

Within one instant completions are processed before arrivals, both in
``(time, job_id)`` order. Processing times do not depend on CH cost.
"""
from __future__ import annotations

import logging
import math
import re
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Iterable, NamedTuple

import numpy as np

from .allocation import AllocationPlan, IdleSequence, best_window, job_cost, window_nodes
from .annealing import SaParams, anneal, initial_solution, repair_random
from .errors import ConfigError, InfeasibleError, InvariantError
from .exact import ScasModel, solve_scas
from .topology import DEFAULT_HOP_COST, FatTree
from .workload import Job, WaitingQueue, WorkloadSpec, generate_workload, priority_key, select_window

log = logging.getLogger(__name__)


class SchedulerKind(str, Enum):
    WINDOW_NSA = "WindowNSA"
    WINDOW_SA = "WindowSA"
    WINDOW_EXACT = "WindowExact"
    FCFS = "FCFS"
    EASY_BACKFILL = "EasyBackfill"

    @property
    def is_window(self) -> bool:
        return self.value.startswith("Window")


class RunningJob(NamedTuple):
    nodes: tuple[int, ...]
    start: float
    finish: float
    estimated_finish: float


@dataclass
class ClusterState:
    tree: FatTree
    idle: IdleSequence
    running: dict[int, RunningJob] = field(default_factory=dict)
    clock: float = 0.0

    @classmethod
    def all_idle(cls, tree: FatTree) -> "ClusterState":
        return cls(tree, IdleSequence(tuple(range(tree.node_count))))

    def complete_until(self, t: float) -> list[int]:
        done = sorted((r.finish, j) for j, r in self.running.items() if r.finish <= t)
        freed = []
        for _, j in done:
            freed.extend(self.running.pop(j).nodes)
        if freed:
            self.idle = self.idle.with_nodes(freed)
        return [j for _, j in done]

    def start(self, job: Job, nodes: Iterable[int], now: float) -> None:
        nodes = tuple(nodes)
        if len(nodes) != job.requested_nodes:
            raise InvariantError(f"job {job.job_id} got {len(nodes)} nodes")
        if not set(nodes) <= set(self.idle.nodes):
            raise InvariantError(f"job {job.job_id} was given busy nodes")
        self.idle = self.idle.without(nodes)
        self.running[job.job_id] = RunningJob(nodes, now, now + job.processing_time,
                                              now + job.estimated_time)

    def check(self) -> None:
        busy = [v for r in self.running.values() for v in r.nodes]
        if len(set(busy)) != len(busy) or set(busy) & set(self.idle.nodes):
            raise InvariantError("node held twice")
        if len(busy) + len(self.idle) != self.tree.node_count:
            raise InvariantError("nodes lost or duplicated")


class AllocationRecord(NamedTuple):
    epoch: int
    clock: float
    job_id: int
    nodes: tuple[int, ...]
    cost: float
    wait: float
    nwp: int


class InstanceRecord(NamedTuple):
    epoch: int
    instance: int
    clock: float
    jobs: int
    idle: int
    solver: str
    cost: float
    seconds: float


# ---------------------------------------------------------------- solvers

WindowSolver = Callable[[ScasModel, np.random.Generator], AllocationPlan]

_SOLVER_RE = re.compile(r"^(seq|exact|sa|greedy-sa|nsa)(?:-(\d+))?$")


def make_solver(name: str, sa_params: SaParams | None = None, policy=None,
                n_max: int = 40) -> WindowSolver:
    """Build a window solver from a short name.

    ``seq`` is the sequential greedy start, ``exact`` the SCAS dynamic
    program, ``sa-N`` / ``nsa-N`` annealing with random / neural repair for
    ``N`` iterations, ``greedy-sa-N`` annealing with cheapest-window repair.
    """
    m = _SOLVER_RE.match(name)
    if not m:
        raise ConfigError(f"unknown solver {name!r}")
    kind, iters = m.group(1), m.group(2)
    base = sa_params or SaParams()
    params = SaParams(base.t_max_temp, base.t_min_temp,
                      int(iters) if iters else base.max_iters, base.max_remove)

    if kind == "seq":
        return lambda model, rng: initial_solution(model).plan
    if kind == "exact":
        return lambda model, rng: solve_scas(model)
    if kind == "sa":
        repair = repair_random
    elif kind == "greedy-sa":
        from .annealing import repair_greedy
        repair = repair_greedy
    else:
        if policy is None:
            raise ConfigError("nsa solver needs a trained policy")
        from .neural.env import NeuralRepair
        repair = NeuralRepair(policy, n_max)

    def solve(model, rng):
        # one job alone: the greedy start is already its cheapest window
        if len(model.jobs) == 1:
            return initial_solution(model).plan
        return anneal(model, params, repair, rng).plan

    return solve


def solve_window(state: ClusterState, selected: list[Job], solver: WindowSolver,
                 rng: np.random.Generator, c: float):
    """Solve, deferring the lowest-priority job while the batch is infeasible.

    Returns ``(plan, model, dropped)``.
    """
    jobs = sorted(selected, key=priority_key)
    dropped: list[Job] = []
    while jobs:
        model = ScasModel(list(jobs), state.idle, state.tree, c)
        try:
            return solver(model, rng), model, dropped
        except InfeasibleError:
            dropped.append(jobs.pop())
    return AllocationPlan({}, 0.0), None, dropped


# ------------------------------------------------------------- window mode

@dataclass
class WindowResult:
    allocations: list[AllocationRecord]
    instances: list[InstanceRecord]


def step_window(state: ClusterState, queue: WaitingQueue, arrivals: list[Job],
                solver: WindowSolver, tau: float, rng: np.random.Generator,
                c: float = DEFAULT_HOP_COST, epoch: int = 0, instance: int = 0,
                compare: dict[str, WindowSolver] | None = None,
                compare_seed: tuple = ()) -> WindowResult:
    """One scheduling period at ``state.clock``; advances the clock by
    ``tau``. ``arrivals`` is consumed from the front."""
    now = state.clock
    state.complete_until(now)
    while arrivals and arrivals[0].arrival_time <= now:
        queue.push(arrivals.pop(0))
    allocations, instances = [], []
    selected, _ = select_window(queue.ordered(), len(state.idle))
    if selected:
        idle_before = len(state.idle)
        t0 = time.perf_counter()
        plan, model, dropped = solve_window(state, selected, solver, rng, c)
        seconds = time.perf_counter() - t0
        for job in dropped:
            job.nwp += 1
        if model is not None:
            instances.append(InstanceRecord(epoch, instance, now, len(model.jobs), idle_before,
                                            "reference", plan.total_cost, seconds))
            for k, (name, other) in enumerate((compare or {}).items()):
                other_rng = np.random.default_rng([*compare_seed, k + 1])
                t0 = time.perf_counter()
                try:
                    cost = other(model, other_rng).total_cost
                except InfeasibleError:
                    cost = math.nan
                instances.append(InstanceRecord(epoch, instance, now, len(model.jobs),
                                                idle_before, name, cost,
                                                time.perf_counter() - t0))
            by_id = {j.job_id: j for j in model.jobs}
            for job_id, nodes in sorted(plan.assignments.items()):
                job = by_id[job_id]
                state.start(job, nodes, now)
                allocations.append(AllocationRecord(epoch, now, job_id, tuple(nodes),
                                                    job_cost(state.tree, nodes, c),
                                                    now - job.arrival_time, job.nwp))
            queue.remove(by_id[j] for j in plan.assignments)
    state.clock = now + tau
    return WindowResult(allocations, instances)


def run_window(jobs: list[Job], tree: FatTree, solver: WindowSolver, tau: float,
               seed: int = 0, c: float = DEFAULT_HOP_COST, epoch: int = 0,
               compare: dict[str, WindowSolver] | None = None,
               max_instances: int | None = None) -> WindowResult:
    _check_sizes(jobs, tree)
    state = ClusterState.all_idle(tree)
    queue = WaitingQueue()
    arrivals = sorted(jobs, key=lambda j: (j.arrival_time, j.job_id))
    allocations, instances = [], []
    count = 0
    while arrivals or len(queue):
        if max_instances is not None and count >= max_instances:
            break
        if not len(queue) and arrivals and not state.running:
            # jump idle periods straight to the boundary of the next arrival
            nxt = math.ceil(arrivals[0].arrival_time / tau) * tau
            state.clock = max(state.clock, nxt)
        rng = np.random.default_rng([seed, epoch, count])
        res = step_window(state, queue, arrivals, solver, tau, rng, c, epoch, count,
                          compare, (seed, epoch, count))
        allocations += res.allocations
        instances += res.instances
        if res.instances:
            count += 1
    return WindowResult(allocations, instances)


# ------------------------------------------------------------ per-job mode

def _shadow(state: ClusterState, head: Job, now: float):
    """Earliest reservation time for ``head`` from estimated finishes, and
    the nodes spare at that time."""
    free = len(state.idle)
    for est, j in sorted((r.estimated_finish, j) for j, r in state.running.items()):
        free += len(state.running[j].nodes)
        if free >= head.requested_nodes:
            return max(est, now), free - head.requested_nodes
    return math.inf, 0


def step_perjob(state: ClusterState, queue: list[Job], kind: SchedulerKind, now: float,
                c: float = DEFAULT_HOP_COST, reservations: list | None = None) -> list[Job]:
    """Start whatever the policy allows at ``now``; ``queue`` is in arrival
    order and is modified in place. Returns the started jobs."""
    started = []

    def launch(job):
        if job.requested_nodes == 1:
            pos = 0
        else:
            pos = best_window(state.tree, state.idle, job.requested_nodes, c)
        state.start(job, window_nodes(state.idle, pos, job.requested_nodes), now)
        queue.remove(job)
        started.append(job)

    while queue and queue[0].requested_nodes <= len(state.idle):
        launch(queue[0])
    if not queue or kind is SchedulerKind.FCFS:
        return started
    head = queue[0]
    shadow, extra = _shadow(state, head, now)
    if reservations is not None:
        reservations.append((head.job_id, shadow))
    for job in list(queue[1:]):
        if job.requested_nodes > len(state.idle):
            continue
        if now + job.estimated_time <= shadow:
            launch(job)
        elif job.requested_nodes <= extra:
            extra -= job.requested_nodes
            launch(job)
    return started


def run_perjob(jobs: list[Job], tree: FatTree, kind: SchedulerKind,
               c: float = DEFAULT_HOP_COST, epoch: int = 0,
               reservations: list | None = None) -> list[AllocationRecord]:
    _check_sizes(jobs, tree)
    state = ClusterState.all_idle(tree)
    arrivals = sorted(jobs, key=lambda j: (j.arrival_time, j.job_id))
    queue: list[Job] = []
    records = []
    while arrivals or queue:
        times = [r.finish for r in state.running.values()]
        if arrivals:
            times.append(arrivals[0].arrival_time)
        now = max(state.clock, min(times))
        state.clock = now
        state.complete_until(now)
        while arrivals and arrivals[0].arrival_time <= now:
            queue.append(arrivals.pop(0))
        for job in step_perjob(state, queue, kind, now, c, reservations):
            nodes = state.running[job.job_id].nodes
            records.append(AllocationRecord(epoch, now, job.job_id, nodes,
                                            job_cost(tree, nodes, c),
                                            now - job.arrival_time, job.nwp))
    return records


def _check_sizes(jobs, tree):
    for job in jobs:
        if job.requested_nodes > tree.node_count:
            raise ConfigError(f"job {job.job_id} requests {job.requested_nodes} nodes; "
                              f"the cluster has {tree.node_count}")


# ----------------------------------------------------------------- epochs

@dataclass
class EpochMetrics:
    epoch: int
    jobs: int
    instances: int
    avg_ch_cost: float
    avg_waiting_time: float
    cancel_rate: float
    solve_time_mean: float = 0.0
    solve_time_max: float = 0.0
    # solver name -> mean cost per instance (reference solver included)
    instance_costs: dict[str, float] = field(default_factory=dict)


@dataclass
class SimulationConfig:
    radix: int = 8
    pod_count: int | None = None
    c: float = DEFAULT_HOP_COST
    scheduler: SchedulerKind = SchedulerKind.WINDOW_SA
    tau: float = 60.0
    sa: SaParams = field(default_factory=SaParams)
    compare: list[str] = field(default_factory=list)
    workload: WorkloadSpec = field(default_factory=WorkloadSpec)
    epochs: int = 10
    instances_per_epoch: int | None = None
    patience: int = 10
    seed: int = 0
    n_max: int | None = None

    @property
    def tree(self) -> FatTree:
        return FatTree(self.radix, self.pod_count)


@dataclass
class SimulationResult:
    epochs: list[EpochMetrics]
    allocations: list[AllocationRecord]
    instances: list[InstanceRecord]


def epoch_metrics(epoch: int, allocations: list[AllocationRecord],
                  instances: list[InstanceRecord], patience: int) -> EpochMetrics:
    ref = [r for r in instances if r.solver == "reference"]
    names = sorted({r.solver for r in instances})
    costs = {n: _mean([r.cost for r in instances if r.solver == n]) for n in names}
    return EpochMetrics(
        epoch=epoch,
        jobs=len(allocations),
        instances=len(ref),
        avg_ch_cost=_mean([a.cost for a in allocations]),
        avg_waiting_time=_mean([a.wait for a in allocations]),
        cancel_rate=_mean([float(a.nwp > patience) for a in allocations]),
        solve_time_mean=_mean([r.seconds for r in ref]),
        solve_time_max=max((r.seconds for r in ref), default=0.0),
        instance_costs=costs,
    )


def _mean(xs) -> float:
    xs = list(xs)
    return math.fsum(xs) / len(xs) if xs else 0.0


def run_epochs(cfg: SimulationConfig, policy=None, progress=None) -> SimulationResult:
    """Simulate ``cfg.epochs`` independent epochs from an all-idle cluster.

    Epoch ``e`` draws its workload with seed ``workload.seed + e``. In window
    mode the reference solver drives the cluster while every solver in
    ``cfg.compare`` solves the same instances on the side.
    """
    tree = cfg.tree
    n_max = cfg.n_max or cfg.workload.node_range[1]
    kind = SchedulerKind(cfg.scheduler)
    if kind.is_window:
        ref_name = {SchedulerKind.WINDOW_NSA: f"nsa-{cfg.sa.max_iters}",
                    SchedulerKind.WINDOW_SA: f"sa-{cfg.sa.max_iters}",
                    SchedulerKind.WINDOW_EXACT: "exact"}[kind]
        solver = make_solver(ref_name, cfg.sa, policy, n_max)
        compare = {name: make_solver(name, cfg.sa, policy, n_max) for name in cfg.compare}
    epochs, allocations, instances = [], [], []
    for e in range(cfg.epochs):
        spec = WorkloadSpec(**{**cfg.workload.__dict__, "seed": cfg.workload.seed + e})
        jobs = generate_workload(spec)
        if kind.is_window:
            res = run_window(jobs, tree, solver, cfg.tau, cfg.seed, cfg.c, e, compare,
                             cfg.instances_per_epoch)
            allocs, insts = res.allocations, res.instances
        else:
            allocs, insts = run_perjob(jobs, tree, kind, cfg.c, e), []
        metrics = epoch_metrics(e, allocs, insts, cfg.patience)
        epochs.append(metrics)
        allocations += allocs
        instances += insts
        log.info("epoch %d: %d jobs, cost %.1f, wait %.1f", e, metrics.jobs,
                 metrics.avg_ch_cost, metrics.avg_waiting_time)
        if progress is not None:
            progress(metrics)
    return SimulationResult(epochs, allocations, instances)
