"""Clipped-surrogate actor-critic training of the repair policy."""
from __future__ import annotations

import copy
import logging
import math
from dataclasses import dataclass, field

import numpy as np
import torch

from ..annealing import SaParams, SaSolution, destroy, initial_solution, place, repair_order
from ..instances import InstanceDistribution, sample_instance
from .env import encode_state, reward_scale
from .networks import PolicyNetwork

log = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class PpoConfig:
    clip_epsilon: float = 0.2
    discount: float = 0.99
    gae_lambda: float = 0.95
    learning_rate: float = 3e-4
    update_epochs: int = 4
    rollout_steps: int = 2048
    minibatch_size: int = 256
    entropy_coef: float = 0.01
    value_coef: float = 0.5
    max_grad_norm: float = 0.5
    updates: int = 200
    instances_per_rollout: int = 64
    max_remove: int = 2
    dense_reward: bool = False
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.clip_epsilon < 1:
            raise ValueError("clip_epsilon must lie in (0, 1)")
        if not 0 < self.discount <= 1:
            raise ValueError("discount must lie in (0, 1]")
        if self.rollout_steps < 1 or self.minibatch_size < 1 or self.updates < 0:
            raise ValueError("rollout_steps, minibatch_size must be positive")


def clipped_surrogate(ratio: torch.Tensor, adv: torch.Tensor, eps: float) -> torch.Tensor:
    """Per-sample objective ``min(ratio * adv, g(eps, adv))`` where ``g``
    scales the advantage by ``1 + eps`` when it is nonnegative and by
    ``1 - eps`` otherwise."""
    g = torch.where(adv >= 0, (1 + eps) * adv, (1 - eps) * adv)
    return torch.minimum(ratio * adv, g)


def ppo_loss(net: PolicyNetwork, states, masks, actions, old_logp, adv, returns,
             cfg: PpoConfig) -> torch.Tensor:
    logits = net.masked_logits(states, masks)
    logp_all = torch.log_softmax(logits, dim=-1)
    logp = logp_all.gather(1, actions[:, None]).squeeze(1)
    entropy = -(logp_all.exp() * logp_all).sum(-1)
    ratio = torch.exp(logp - old_logp)
    policy = clipped_surrogate(ratio, adv, cfg.clip_epsilon).mean()
    value = ((net.value(states) - returns) ** 2).mean()
    return -policy + cfg.value_coef * value - cfg.entropy_coef * entropy.mean()


@dataclass
class _Episode:
    sol: SaSolution
    order: list
    steps: list = field(default_factory=list)

    @property
    def done(self):
        return len(self.steps) == len(self.order)


def episode_rewards(job_costs, scale: float, dense: bool = False) -> list[float]:
    """Per-step rewards for one repair episode. Terminal-only by default:
    every step but the last earns 0 and the last earns the negated total
    cost over ``scale``."""
    if dense:
        return [-x / scale for x in job_costs]
    r = [0.0] * len(job_costs)
    r[-1] = -math.fsum(job_costs) / scale
    return r


def _gae(rewards, values, gamma, lam):
    adv = np.zeros(len(rewards))
    running = 0.0
    for t in reversed(range(len(rewards))):
        nxt = values[t + 1] if t + 1 < len(rewards) else 0.0
        delta = rewards[t] + gamma * nxt - values[t]
        running = delta + gamma * lam * running
        adv[t] = running
    return adv


def collect_rollout(net: PolicyNetwork, dist: InstanceDistribution, cfg: PpoConfig,
                    rng: np.random.Generator, batch: int = 64):
    """Sample destroy-then-repair episodes until ``rollout_steps`` decisions
    have been made. Returns flat step arrays plus per-episode repair costs."""
    params = SaParams(max_remove=cfg.max_remove)
    pool = [initial_solution(sample_instance(dist, rng)) for _ in range(cfg.instances_per_rollout)]
    pool = [s for s in pool if s.placements]
    scale = reward_scale(dist.c, dist.n_max)
    tree = dist.tree
    out = dict(states=[], masks=[], actions=[], logp=[], adv=[], returns=[])
    rewards, costs = [], []
    steps = 0
    k = 0
    while steps < cfg.rollout_steps:
        episodes = []
        for _ in range(batch):
            partial, removed = destroy(pool[k % len(pool)], params, rng)
            k += 1
            episodes.append(_Episode(partial, repair_order(removed)))
        while True:
            live = [e for e in episodes if not e.done]
            if not live:
                break
            enc = []
            for e in live:
                i = len(e.steps)
                enc.append(encode_state(tree, e.sol.idle, e.order[i], e.order[i + 1:],
                                        net.q, dist.n_max))
            states = torch.from_numpy(np.stack([s for s, _ in enc]))
            masks = torch.from_numpy(np.stack([m for _, m in enc]))
            with torch.no_grad():
                logp_all = torch.log_softmax(net.masked_logits(states, masks).double(), -1)
                values = net.value(states).double().numpy()
            probs = logp_all.exp().numpy()
            for j, e in enumerate(live):
                p = probs[j] / probs[j].sum()
                a = int(rng.choice(len(p), p=p))
                e.steps.append((enc[j][0], enc[j][1], a, float(logp_all[j, a]), float(values[j])))
                e.sol = place(e.sol, e.order[len(e.steps) - 1], a)
        for e in episodes:
            job_costs = [e.sol.job_costs[j.job_id] for j in e.order]
            cost = math.fsum(job_costs)
            r = episode_rewards(job_costs, scale, cfg.dense_reward)
            vals = [s[4] for s in e.steps]
            adv = _gae(r, vals, cfg.discount, cfg.gae_lambda)
            for t, (s, m, a, lp, v) in enumerate(e.steps):
                out["states"].append(s)
                out["masks"].append(m)
                out["actions"].append(a)
                out["logp"].append(lp)
                out["adv"].append(adv[t])
                out["returns"].append(adv[t] + v)
            rewards.append(-cost / scale)
            costs.append(cost)
            steps += len(e.steps)
    return out, np.array(rewards), np.array(costs)


def _update(net, opt, data, cfg: PpoConfig, rng: np.random.Generator):
    dtype = next(net.parameters()).dtype
    states = torch.as_tensor(np.stack(data["states"]), dtype=dtype)
    masks = torch.from_numpy(np.stack(data["masks"]))
    actions = torch.as_tensor(data["actions"], dtype=torch.long)
    old_logp = torch.as_tensor(data["logp"], dtype=dtype)
    adv = torch.as_tensor(data["adv"], dtype=dtype)
    returns = torch.as_tensor(data["returns"], dtype=dtype)
    n = len(actions)
    for _ in range(cfg.update_epochs):
        perm = rng.permutation(n)
        for lo in range(0, n, cfg.minibatch_size):
            idx = torch.from_numpy(perm[lo:lo + cfg.minibatch_size])
            a = adv[idx]
            if len(idx) > 1:
                a = (a - a.mean()) / (a.std() + 1e-8)
            loss = ppo_loss(net, states[idx], masks[idx], actions[idx], old_logp[idx],
                            a, returns[idx], cfg)
            if not torch.isfinite(loss):
                raise TrainingDiverged("loss became non-finite")
            opt.zero_grad()
            loss.backward()
            torch.nn.utils.clip_grad_norm_(net.parameters(), cfg.max_grad_norm)
            opt.step()


def train_ppo(net: PolicyNetwork, cfg: PpoConfig,
              dist: InstanceDistribution | None = None, progress=None):
    """Train ``net`` in place. Returns ``(net, curve)`` where ``curve`` holds
    one row per update: index, mean episode reward, mean repair cost."""
    dist = dist or InstanceDistribution()
    torch.set_num_threads(1)
    rng = np.random.default_rng(cfg.seed)
    opt = torch.optim.Adam(net.parameters(), lr=cfg.learning_rate)
    curve = []
    for u in range(cfg.updates):
        data, rewards, costs = collect_rollout(net, dist, cfg, rng)
        mean_reward = float(rewards.mean())
        if not math.isfinite(mean_reward):
            raise TrainingDiverged(f"mean reward became {mean_reward} at update {u}")
        _update(net, opt, data, cfg, rng)
        row = {"update": u, "mean_reward": mean_reward, "mean_cost": float(costs.mean())}
        curve.append(row)
        log.info("update %d reward %.5f cost %.1f", u, mean_reward, row["mean_cost"])
        if progress is not None:
            progress(row)
    return net, curve


def gradient_check(net: PolicyNetwork, batch: int = 6, coords_per_tensor: int = 12,
                   step: float = 1e-5, seed: int = 0, cfg: PpoConfig | None = None,
                   zero_state: bool = False) -> float:
    """Largest relative error between autograd and central differences of
    the training loss, over a sample of parameter coordinates (float64)."""
    cfg = cfg or PpoConfig()
    gen = torch.Generator().manual_seed(seed)
    net = copy.deepcopy(net).double()
    q = net.q
    if zero_state:
        states = torch.zeros(batch, q, 4, dtype=torch.float64)
    else:
        states = torch.rand(batch, q, 4, generator=gen, dtype=torch.float64)
    legal = torch.randint(1, q + 1, (batch,), generator=gen)
    masks = torch.arange(q)[None, :] < legal[:, None]
    actions = (torch.rand(batch, generator=gen, dtype=torch.float64) * legal).long()
    with torch.no_grad():
        logp = torch.log_softmax(net.masked_logits(states, masks), -1)
        logp = logp.gather(1, actions[:, None]).squeeze(1)
    old_logp = logp + 0.1 * torch.randn(batch, generator=gen, dtype=torch.float64)
    adv = torch.randn(batch, generator=gen, dtype=torch.float64)
    returns = torch.randn(batch, generator=gen, dtype=torch.float64)

    def loss_fn():
        return ppo_loss(net, states, masks, actions, old_logp, adv, returns, cfg)

    net.zero_grad()
    loss_fn().backward()
    worst = 0.0
    with torch.no_grad():
        for p in net.parameters():
            flat = p.view(-1)
            grad = p.grad.view(-1)
            picks = torch.randperm(flat.numel(), generator=gen)[:coords_per_tensor]
            for i in picks.tolist():
                orig = flat[i].item()
                flat[i] = orig + step
                up = loss_fn().item()
                flat[i] = orig - step
                down = loss_fn().item()
                flat[i] = orig
                numeric = (up - down) / (2 * step)
                analytic = grad[i].item()
                if not (math.isfinite(numeric) and math.isfinite(analytic)):
                    return math.inf
                denom = max(abs(numeric), abs(analytic), 1e-6)
                worst = max(worst, abs(numeric - analytic) / denom)
    return worst
