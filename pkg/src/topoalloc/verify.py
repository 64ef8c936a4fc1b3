"""Oracle suite behind ``topoalloc verify``.

Each check returns ``(ok, detail)``. The checks are cheap enough to run as a
release gate (well under a minute on one core).
"""
from __future__ import annotations

import itertools
import math
from collections import deque
from typing import Callable

import numpy as np
import torch

from .allocation import IdleSequence, scas_feasible_starts
from .annealing import SaParams, acceptance_probability, temperature
from .errors import InfeasibleError, PolicyFileError
from .exact import ScasModel, build_csp, solve_csp_dp, solve_scas_bruteforce
from .neural.io import load_policy
from .neural.networks import ARCHITECTURES, STATE_ATTRS, STATE_ROWS, PolicyNetwork, conv_lengths
from .neural.ppo import gradient_check
from .topology import FatTree, ch_cost
from .workload import Job

Check = Callable[[], "tuple[bool, str]"]


# ------------------------------------------------------------ enumeration

def fig2_counts() -> tuple[int, int]:
    """Feasible placements of a 4-node job on the 4-ary tree with idle nodes
    1..10 while nodes 5..8 are already taken: (static, dynamic)."""
    q = IdleSequence(tuple(range(1, 11)))
    taken = range(5, 9)
    static = len(scas_feasible_starts(q, 4, taken))
    rest = q.without(taken)
    # every start of the shrunk sequence is a distinct dynamic placement
    dynamic = len(rest) if len(rest) >= 4 else 0
    return static, dynamic


def check_fig2():
    s, d = fig2_counts()
    return (s, d) == (3, 6), f"static={s} dynamic={d}"


# ------------------------------------------------------------ hop oracle

def fat_tree_graph(radix: int) -> tuple[dict, list]:
    """Explicit switch graph of a full k-ary fat tree. Hosts are ``("h", i)``
    with ``i`` numbered switch by switch, pod by pod."""
    half = radix // 2
    adj: dict = {}

    def link(a, b):
        adj.setdefault(a, set()).add(b)
        adj.setdefault(b, set()).add(a)

    hosts = []
    for pod in range(radix):
        for e in range(half):
            edge = ("edge", pod, e)
            for h in range(half):
                host = ("h", (pod * half + e) * half + h)
                hosts.append(host)
                link(host, edge)
            for a in range(half):
                link(edge, ("agg", pod, a))
        for a in range(half):
            for c in range(half):
                link(("agg", pod, a), ("core", a, c))
    return adj, hosts


def bfs_hops(adj: dict, src) -> dict:
    dist = {src: 0}
    todo = deque([src])
    while todo:
        u = todo.popleft()
        for v in adj[u]:
            if v not in dist:
                dist[v] = dist[u] + 1
                todo.append(v)
    return dist


def brute_ch_cost(dist: dict, nodes, c: float = 1000.0) -> float:
    total = 0
    for a in nodes:
        for b in nodes:
            if a != b:
                total += dist[("h", a)][("h", b)]
    return c * total / len(nodes)


def check_hop_oracle(radix: int = 4):
    tree = FatTree(radix)
    adj, hosts = fat_tree_graph(radix)
    dist = {h: bfs_hops(adj, h) for h in hosts}
    ids = range(tree.node_count)
    bad = 0
    checked = 0
    for size in (2, 4):
        for nodes in itertools.combinations(ids, size):
            checked += 1
            if ch_cost(tree, nodes) != brute_ch_cost(dist, nodes):
                bad += 1
    return bad == 0, f"{checked} subsets, {bad} mismatches"


# ------------------------------------------------------------ exact solver

def random_scas_instance(rng: np.random.Generator, radix: int = 4, max_len: int = 12,
                         max_jobs: int = 3, sizes: tuple[int, int] = (2, 4)) -> ScasModel:
    tree = FatTree(radix)
    m = int(rng.integers(1, max_jobs + 1))
    reqs = rng.integers(sizes[0], sizes[1] + 1, size=m)
    length = int(rng.integers(min(int(reqs.sum()), max_len), max_len + 1))
    nodes = rng.choice(tree.node_count, size=length, replace=False)
    jobs = [Job(i, int(r), 1.0, 1.0) for i, r in enumerate(reqs)]
    return ScasModel(jobs, IdleSequence.of(int(v) for v in nodes), tree)


def compare_exact(model: ScasModel) -> tuple[bool, bool]:
    """(dp == no-wrap brute force, wrap brute force <= no-wrap brute force);
    infeasible on both sides counts as agreement."""
    try:
        nowrap = solve_scas_bruteforce(model, wrap=False).total_cost
    except InfeasibleError:
        nowrap = None
    try:
        dp = solve_csp_dp(build_csp(model)).total_cost
    except InfeasibleError:
        dp = None
    try:
        wrapped = solve_scas_bruteforce(model, wrap=True).total_cost
    except InfeasibleError:
        wrapped = None
    same = dp == nowrap
    if nowrap is None:
        bound = True
    else:
        bound = wrapped is not None and wrapped <= nowrap
    return same, bound


def check_exact(count: int = 200, seed: int = 0):
    rng = np.random.default_rng(seed)
    mism = loose = 0
    for _ in range(count):
        same, bound = compare_exact(random_scas_instance(rng))
        mism += not same
        loose += not bound
    return mism == 0 and loose == 0, f"{count} instances, {mism} dp mismatches, {loose} wrap violations"


# ------------------------------------------------------------ annealing

def check_schedule():
    p = SaParams()
    t0, tn = temperature(p, 0), temperature(p, p.max_iters)
    rng = np.random.default_rng(1)
    worst = 0.0
    for _ in range(1000):
        cur = float(rng.uniform(0, 1e5))
        cand = cur + float(rng.uniform(0, 5e3))
        temp = temperature(p, int(rng.integers(0, p.max_iters + 1)))
        worst = max(worst, abs(acceptance_probability(cur, cand, temp) - math.exp((cur - cand) / temp)))
    ok = t0 == p.t_max_temp and abs(tn - p.t_min_temp) <= 1e-9 and worst <= 1e-12
    return ok, f"T(0)={t0!r} T(tmax)={tn!r} metropolis err={worst:.1e}"


# ------------------------------------------------------------ networks

def random_masks(gen: torch.Generator, count: int, q: int = STATE_ROWS) -> torch.Tensor:
    legal = torch.randint(1, q + 1, (count,), generator=gen)
    return torch.arange(q)[None, :] < legal[:, None]


def mask_mass(net: PolicyNetwork, count: int = 10_000, seed: int = 0) -> tuple[float, float]:
    """(probability mass on masked actions summed over all states, largest
    |sum - 1| of the legal mass) over random states."""
    gen = torch.Generator().manual_seed(seed)
    states = torch.rand(count, STATE_ROWS, STATE_ATTRS, generator=gen)
    masks = random_masks(gen, count)
    with torch.no_grad():
        probs = net(states, masks).double()
    masked = (probs * ~masks).sum().item()
    legal = (probs * masks).sum(-1)
    return masked, (legal - 1).abs().max().item()


def check_masking(count: int = 10_000):
    torch.manual_seed(0)
    masked, dev = mask_mass(PolicyNetwork("CNN-3"), count)
    return masked < 1e-20 and dev <= 1e-6, f"masked mass {masked:.1e}, sum error {dev:.1e}"


def check_shapes():
    bad = []
    if conv_lengths() != (91, 44):
        bad.append(f"conv lengths {conv_lengths()}")
    x = torch.rand(3, STATE_ROWS, STATE_ATTRS)
    for arch in ARCHITECTURES:
        net = PolicyNetwork(arch)
        if net.logits(x).shape != (3, STATE_ROWS) or net.value(x).shape != (3,):
            bad.append(arch)
    return not bad, "all six ok" if not bad else ", ".join(bad)


def check_gradients(tol: float = 1e-4):
    torch.manual_seed(0)
    errs = {arch: gradient_check(PolicyNetwork(arch)) for arch in ARCHITECTURES}
    worst = max(errs.values())
    return worst < tol, " ".join(f"{a}={e:.1e}" for a, e in errs.items())


def check_policy_file(path: str):
    try:
        net, meta = load_policy(path)
    except PolicyFileError as exc:
        return False, str(exc)
    return True, f"{meta['arch']} loaded"


# ------------------------------------------------------------ suite

def suite(policy_path: str | None = None, exact_count: int = 200) -> list[tuple[str, Check]]:
    checks: list[tuple[str, Check]] = [
        ("placement-enumeration", check_fig2),
        ("hop-cost-oracle", check_hop_oracle),
        ("exact-vs-bruteforce", lambda: check_exact(exact_count)),
        ("temperature-schedule", check_schedule),
        ("network-shapes", check_shapes),
        ("gradient-check", check_gradients),
        ("action-masking", check_masking),
    ]
    if policy_path is not None:
        checks.append(("policy-file", lambda: check_policy_file(policy_path)))
    return checks


def run_suite(checks, emit=print) -> bool:
    ok_all = True
    for name, fn in checks:
        try:
            ok, detail = fn()
        except Exception as exc:  # a crashing check is a failed check
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        ok_all &= ok
        emit(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
    return ok_all
