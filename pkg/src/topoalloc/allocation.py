"""Contiguous allocation over the idle-node sequence.

A window is ``n`` consecutive entries of the idle sequence starting at a
position, wrapping to the head of the sequence when the tail runs out. Under
the static strategy (SCAS) the sequence is frozen for the whole scheduling
window and later jobs must avoid nodes already taken; under the dynamic
strategy (DCAS) allocated nodes are removed from the sequence after every
placement.

Windows are addressed by position in the sequence. ``IdleSequence.position``
and ``IdleSequence.nodes`` translate between positions and node identifiers.
"""
from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

from .errors import CapacityError, DomainError, InfeasibleError, InvariantError
from .topology import DEFAULT_HOP_COST, FatTree, ch_cost, window_hop_sums


@dataclass(frozen=True)
class IdleSequence:
    nodes: tuple[int, ...]

    def __post_init__(self):
        nodes = tuple(int(v) for v in self.nodes)
        if any(a >= b for a, b in zip(nodes, nodes[1:])):
            raise InvariantError("idle sequence must be strictly increasing")
        object.__setattr__(self, "nodes", nodes)

    @classmethod
    def of(cls, nodes: Iterable[int]) -> "IdleSequence":
        return cls(tuple(sorted(nodes)))

    def __len__(self):
        return len(self.nodes)

    def __iter__(self):
        return iter(self.nodes)

    def __getitem__(self, pos):
        return self.nodes[pos]

    def position(self, node: int) -> int:
        i = bisect.bisect_left(self.nodes, node)
        if i == len(self.nodes) or self.nodes[i] != node:
            raise DomainError(f"node {node} is not idle")
        return i

    def successor_position(self, node: int) -> int:
        """Position of the first idle node with identifier >= ``node``,
        wrapping to the head."""
        if not self.nodes:
            raise CapacityError("empty idle sequence")
        i = bisect.bisect_left(self.nodes, node)
        return i % len(self.nodes)

    def without(self, removed: Iterable[int]) -> "IdleSequence":
        removed = set(removed)
        return IdleSequence(tuple(v for v in self.nodes if v not in removed))

    def with_nodes(self, added: Iterable[int]) -> "IdleSequence":
        merged = set(self.nodes)
        added = list(added)
        if merged.intersection(added):
            raise InvariantError("returned nodes are already idle")
        merged.update(added)
        return IdleSequence(tuple(sorted(merged)))


def window_positions(length: int, start_pos: int, n: int) -> list[int]:
    if n > length:
        raise CapacityError(f"window of {n} nodes exceeds sequence of {length}")
    if not 0 <= start_pos < length:
        raise DomainError(f"start position {start_pos} outside [0, {length})")
    return [(start_pos + i) % length for i in range(n)]


def window_nodes(q: IdleSequence, start_pos: int, n: int) -> tuple[int, ...]:
    """Node identifiers of the wrap-around window of ``n`` entries."""
    return tuple(q.nodes[p] for p in window_positions(len(q), start_pos, n))


def window_cost(tree: FatTree, q: IdleSequence, start_pos: int, n: int,
                c: float = DEFAULT_HOP_COST) -> float:
    return ch_cost(tree, window_nodes(q, start_pos, n), c)


def all_window_costs(tree: FatTree, q: IdleSequence, n: int,
                     c: float = DEFAULT_HOP_COST, wrap: bool = True) -> np.ndarray:
    """CH cost of the window at every start position.

    With ``wrap=False`` only the ``len(q) - n + 1`` non-wrapping starts are
    evaluated. Values are bit-identical to :func:`window_cost`.
    """
    length = len(q)
    if n > length:
        raise CapacityError(f"window of {n} nodes exceeds sequence of {length}")
    if n < 2:
        raise DomainError("CH cost needs at least two nodes")
    starts = np.arange(length if wrap else length - n + 1)
    idx = (starts[:, None] + np.arange(n)[None, :]) % length
    windows = np.asarray(q.nodes, dtype=np.int64)[idx]
    sums = window_hop_sums(tree, windows)
    return np.array([c * int(s) / n for s in sums])


def scas_feasible_starts(q: IdleSequence, n: int, occupied: Iterable[int]) -> list[int]:
    """Start positions whose window avoids every node in ``occupied``."""
    length = len(q)
    if n > length or n < 1:
        return []
    occupied = set(occupied)
    blocked = [v in occupied for v in q.nodes]
    starts = []
    for s in range(length):
        if not any(blocked[(s + i) % length] for i in range(n)):
            starts.append(s)
    return starts


def dcas_allocate(q: IdleSequence, start_pos: int, n: int) -> tuple[tuple[int, ...], IdleSequence]:
    """Take the window at ``start_pos`` and drop its nodes from the sequence."""
    taken = window_nodes(q, start_pos, n)
    return taken, q.without(taken)


def job_cost(tree: FatTree, nodes: Iterable[int], c: float = DEFAULT_HOP_COST) -> float:
    """CH cost of a job's node set; single-node jobs cost nothing."""
    nodes = list(nodes)
    if len(nodes) == 1:
        return 0.0
    return ch_cost(tree, nodes, c)


@dataclass
class AllocationPlan:
    assignments: dict[int, tuple[int, ...]] = field(default_factory=dict)
    total_cost: float = 0.0

    def nodes(self) -> set[int]:
        return {v for ns in self.assignments.values() for v in ns}


def check_disjoint(assignments: Mapping[int, Iterable[int]]) -> None:
    seen: set[int] = set()
    for job_id, nodes in assignments.items():
        nodes = list(nodes)
        if len(set(nodes)) != len(nodes):
            raise InvariantError(f"job {job_id} holds a node twice")
        if seen.intersection(nodes):
            raise InvariantError(f"job {job_id} overlaps another assignment")
        seen.update(nodes)


def plan_cost(tree: FatTree, plan: AllocationPlan | Mapping[int, Iterable[int]],
              c: float = DEFAULT_HOP_COST) -> float:
    """Total CH cost of a plan.

    ``math.fsum`` makes the total independent of summation order, so equal
    plans produced by different solvers compare exactly.
    """
    assignments = plan.assignments if isinstance(plan, AllocationPlan) else plan
    check_disjoint(assignments)
    return math.fsum(job_cost(tree, ns, c) for ns in assignments.values())


def make_plan(tree: FatTree, assignments: Mapping[int, Iterable[int]],
              c: float = DEFAULT_HOP_COST) -> AllocationPlan:
    assignments = {j: tuple(ns) for j, ns in assignments.items()}
    return AllocationPlan(assignments, plan_cost(tree, assignments, c))


def best_window(tree: FatTree, q: IdleSequence, n: int, c: float = DEFAULT_HOP_COST,
                occupied: Iterable[int] = ()) -> int:
    """Lowest-cost feasible start position (earliest on ties)."""
    occupied = set(occupied)
    if n == 1:
        starts = [p for p, v in enumerate(q.nodes) if v not in occupied]
        if not starts:
            raise InfeasibleError("no idle node left")
        return starts[0]
    costs = all_window_costs(tree, q, n, c)
    if occupied:
        feasible = scas_feasible_starts(q, n, occupied)
        if not feasible:
            raise InfeasibleError(f"no free window of {n} nodes")
        mask = np.full(len(costs), np.inf)
        mask[feasible] = costs[feasible]
        costs = mask
    return int(np.argmin(costs))
