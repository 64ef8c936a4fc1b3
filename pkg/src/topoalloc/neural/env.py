"""Repair as a sequential decision problem.

Removed jobs are reinserted largest first. At each step the agent sees the
first ``q`` entries of the current idle sequence and picks the start
position of the current job's window. Rewards are negated CH costs divided
by ``reward_scale``: either per placed job or, summed, at the final step.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from ..allocation import IdleSequence
from ..annealing import SaSolution, place, repair_order
from ..errors import InfeasibleError
from ..topology import CROSS_POD_HOPS, FatTree
from ..workload import Job
from .networks import STATE_ATTRS, STATE_ROWS, PolicyNetwork


def reward_scale(c: float, n_max: int) -> float:
    return c * CROSS_POD_HOPS * n_max


def encode_state(tree: FatTree, seq: IdleSequence, current: Job, pending,
                 q: int = STATE_ROWS, n_max: int = 40):
    """State matrix ``(q, 4)`` and legal-action mask ``(q,)``.

    ``pending`` holds the other jobs still waiting for reinsertion. Rows past
    the end of the sequence are zero. Columns: parent switch (index within
    its pod) and pod scaled to [0, 1], current request over ``n_max``, mean
    pending request over ``n_max``.
    """
    state = np.zeros((q, STATE_ATTRS), dtype=np.float32)
    mask = np.zeros(q, dtype=bool)
    rows = min(len(seq), q)
    if rows:
        nodes = np.asarray(seq.nodes[:rows], dtype=np.int64)
        # switch by its index inside the pod: neighbouring switches differ by
        # a large step, and (pod, local switch) still names the switch
        per_pod = tree.nodes_per_pod // tree.nodes_per_switch
        sw_den = max(per_pod - 1, 1)
        pod_den = max(tree.pod_count - 1, 1)
        state[:rows, 0] = (nodes // tree.nodes_per_switch % per_pod) / sw_den
        state[:rows, 1] = (nodes // tree.nodes_per_pod) / pod_den
        state[:rows, 2] = min(current.requested_nodes / n_max, 1.0)
        pending = list(pending)
        if pending:
            avg = sum(j.requested_nodes for j in pending) / (len(pending) * n_max)
            state[:rows, 3] = min(avg, 1.0)
        if current.requested_nodes <= len(seq):
            # every start of the dynamic sequence is feasible
            mask[:rows] = True
    return state, mask


@dataclass
class NeuralRepair:
    """Repair operator driven by a policy network.

    Samples from the policy when ``greedy`` is false, otherwise takes the most
    probable start.
    """
    net: PolicyNetwork
    n_max: int
    greedy: bool = True

    def __call__(self, partial: SaSolution, removed, rng: np.random.Generator) -> SaSolution:
        return repair_neural(partial, removed, self.net, rng, self.n_max, self.greedy)


def choose_action(net: PolicyNetwork, state: np.ndarray, mask: np.ndarray,
                  rng: np.random.Generator | None, greedy: bool) -> int:
    with torch.no_grad():
        logits = net.masked_logits(torch.from_numpy(state), torch.from_numpy(mask))[0]
    if greedy:
        return int(torch.argmax(logits))
    probs = torch.softmax(logits.double(), dim=-1).numpy()
    return int(rng.choice(len(probs), p=probs / probs.sum()))


def repair_neural(partial: SaSolution, removed, net: PolicyNetwork,
                  rng: np.random.Generator | None = None, n_max: int = 40,
                  greedy: bool = True) -> SaSolution:
    model = partial.model
    order = repair_order(removed)
    sol = partial
    for i, job in enumerate(order):
        if job.requested_nodes > len(sol.idle):
            raise InfeasibleError(f"no room to reinsert job {job.job_id}")
        state, mask = encode_state(model.tree, sol.idle, job, order[i + 1:], net.q, n_max)
        pos = choose_action(net, state, mask, rng, greedy)
        sol = place(sol, job, pos)
    return sol
