"""Pruned k-ary fat-tree model and the communication-hop (CH) cost.

Nodes are numbered left to right. With ``k`` ports per switch every level-0
switch serves ``k/2`` nodes and every pod ``(k/2)**2`` nodes, so switch and
pod membership follow directly from the identifier.
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .errors import DomainError

DEFAULT_HOP_COST = 1000.0

SAME_SWITCH_HOPS = 2
SAME_POD_HOPS = 4
CROSS_POD_HOPS = 6


@dataclass(frozen=True)
class FatTree:
    radix: int
    pod_count: int | None = None

    def __post_init__(self):
        if self.radix < 2 or self.radix % 2:
            raise DomainError(f"radix must be an even integer >= 2, got {self.radix}")
        if self.pod_count is None:
            object.__setattr__(self, "pod_count", self.radix)
        if not 1 <= self.pod_count <= self.radix:
            raise DomainError(f"pod_count must lie in [1, {self.radix}], got {self.pod_count}")

    @property
    def nodes_per_switch(self) -> int:
        return self.radix // 2

    @property
    def nodes_per_pod(self) -> int:
        return (self.radix // 2) ** 2

    @property
    def node_count(self) -> int:
        return self.pod_count * self.nodes_per_pod

    @property
    def switch_count(self) -> int:
        return self.pod_count * self.nodes_per_switch

    def switch_of(self, node: int) -> int:
        self.check_node(node)
        return node // self.nodes_per_switch

    def pod_of(self, node: int) -> int:
        self.check_node(node)
        return node // self.nodes_per_pod

    def check_node(self, node: int) -> None:
        if not 0 <= node < self.node_count:
            raise DomainError(f"node {node} outside [0, {self.node_count})")


def hops(tree: FatTree, a: int, b: int) -> int:
    """Number of communication hops between two distinct nodes."""
    if a == b:
        raise DomainError("hops is undefined for a node and itself")
    if tree.switch_of(a) == tree.switch_of(b):
        return SAME_SWITCH_HOPS
    if tree.pod_of(a) == tree.pod_of(b):
        return SAME_POD_HOPS
    return CROSS_POD_HOPS


def ordered_hop_sum(tree: FatTree, nodes: Iterable[int]) -> int:
    """Sum of hops over all ordered pairs of distinct nodes.

    Every pair starts at the cross-pod count; pairs sharing a pod save two
    hops and pairs that also share a switch save two more.
    """
    nodes = list(nodes)
    if len(set(nodes)) != len(nodes):
        raise DomainError("node set contains duplicates")
    for v in nodes:
        tree.check_node(v)
    n = len(nodes)
    switches = Counter(v // tree.nodes_per_switch for v in nodes)
    pods = Counter(v // tree.nodes_per_pod for v in nodes)
    same_switch = sum(s * (s - 1) for s in switches.values())
    same_pod = sum(p * (p - 1) for p in pods.values())
    return CROSS_POD_HOPS * n * (n - 1) - 2 * same_pod - 2 * same_switch


def ch_cost(tree: FatTree, nodes: Iterable[int], c: float = DEFAULT_HOP_COST) -> float:
    """CH cost of a job placed on ``nodes``: ``c`` times the ordered-pair hop
    sum, divided by the number of nodes."""
    nodes = list(nodes)
    if len(nodes) < 2:
        raise DomainError("CH cost needs at least two nodes")
    if c < 0:
        raise DomainError("hop cost must be nonnegative")
    return c * ordered_hop_sum(tree, nodes) / len(nodes)


def window_hop_sums(tree: FatTree, windows: np.ndarray) -> np.ndarray:
    """Vectorised ordered-pair hop sums for a ``(m, n)`` array of node ids."""
    windows = np.asarray(windows, dtype=np.int64)
    n = windows.shape[1]
    sw = windows // tree.nodes_per_switch
    pod = windows // tree.nodes_per_pod
    same_switch = (sw[:, :, None] == sw[:, None, :]).sum(axis=(1, 2)) - n
    same_pod = (pod[:, :, None] == pod[:, None, :]).sum(axis=(1, 2)) - n
    return CROSS_POD_HOPS * n * (n - 1) - 2 * same_pod - 2 * same_switch
