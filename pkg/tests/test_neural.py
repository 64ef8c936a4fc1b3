import numpy as np
import pytest
import torch

from topoalloc.allocation import IdleSequence, check_disjoint
from topoalloc.annealing import SaParams, anneal, destroy, initial_solution
from topoalloc.errors import MaskError, PolicyFileError
from topoalloc.instances import InstanceDistribution, sample_instances
from topoalloc.neural.env import NeuralRepair, encode_state, repair_neural, reward_scale
from topoalloc.neural.io import load_policy, policy_bytes, save_policy
from topoalloc.neural.networks import (ARCHITECTURES, PolicyNetwork, conv_lengths,
                                       policy_forward)
from topoalloc.neural.ppo import (PpoConfig, _gae, clipped_surrogate, gradient_check,
                                  train_ppo)
from topoalloc.topology import FatTree
from topoalloc.verify import mask_mass
from topoalloc.workload import Job


@pytest.fixture(autouse=True)
def _seed():
    torch.manual_seed(0)


def test_conv_lengths():
    assert conv_lengths() == (91, 44)


@pytest.mark.parametrize("arch", list(ARCHITECTURES))
def test_shapes(arch):
    net = PolicyNetwork(arch)
    x = torch.rand(5, 100, 4)
    assert net.logits(x).shape == (5, 100)
    assert net.value(x).shape == (5,)
    assert net.logits(x[0]).shape == (1, 100)


def test_rejects_other_q():
    with pytest.raises(ValueError):
        PolicyNetwork("FCN-1", q=50)


@pytest.mark.parametrize("arch", list(ARCHITECTURES))
def test_gradients(arch):
    assert gradient_check(PolicyNetwork(arch)) < 1e-4


def test_gradients_at_zero_state():
    assert gradient_check(PolicyNetwork("CNN-1"), zero_state=True) < 1e-4


def test_masking():
    masked, dev = mask_mass(PolicyNetwork("FCN-2"), count=2000)
    assert masked < 1e-20
    assert dev <= 1e-6


def test_all_masked_is_an_error():
    net = PolicyNetwork("FCN-1")
    with pytest.raises(MaskError):
        net.masked_logits(torch.rand(1, 100, 4), torch.zeros(1, 100, dtype=torch.bool))


def test_policy_forward_numpy():
    mask = np.zeros(100, dtype=bool)
    mask[:3] = True
    p = policy_forward(PolicyNetwork("CNN-2"), np.random.rand(100, 4), mask)
    assert p.shape == (1, 100) and float(p[0, 3:].sum()) == 0.0


def test_encode_state():
    tree = FatTree(8)
    seq = IdleSequence(tuple(range(120, 128)) + ())
    state, mask = encode_state(tree, seq, Job(0, 4, 1.0, 1.0), [Job(1, 2, 1.0, 1.0)], n_max=8)
    assert state.shape == (100, 4) and state.dtype == np.float32
    assert mask[:8].all() and not mask[8:].any()
    # node 120 sits under the third switch of the last pod
    assert state[0, 0] == 2 / 3 and state[0, 1] == 1.0
    assert state[0, 2] == 0.5 and state[0, 3] == 0.25
    assert not state[8:].any()


def test_encode_state_caps_rows():
    seq = IdleSequence(tuple(range(128)))
    state, mask = encode_state(FatTree(8), seq, Job(0, 40, 1.0, 1.0), [], n_max=8)
    assert mask.sum() == 100
    assert state[:, 2].max() == 1.0


def test_neural_repair_is_valid():
    net = PolicyNetwork("CNN-3")
    rng = np.random.default_rng(0)
    for m in sample_instances(InstanceDistribution(), 5, 1):
        sol = initial_solution(m)
        partial, removed = destroy(sol, SaParams(), rng)
        for greedy in (True, False):
            full = repair_neural(partial, removed, net, rng, n_max=8, greedy=greedy)
            check_disjoint(full.assignments)
            assert set(full.assignments) == {j.job_id for j in m.jobs}


def test_nsa_runs():
    m = sample_instances(InstanceDistribution(), 1, 4)[0]
    best = anneal(m, SaParams(max_iters=20), NeuralRepair(PolicyNetwork("FCN-1"), 8),
                  np.random.default_rng(0))
    assert best.cost <= initial_solution(m).cost


def test_reward_scale():
    assert reward_scale(1000.0, 8) == 48000.0


def test_clipped_surrogate():
    ratio = torch.tensor([1.5, 0.5, 1.5, 0.5])
    adv = torch.tensor([1.0, 1.0, -1.0, -1.0])
    assert clipped_surrogate(ratio, adv, 0.2).tolist() == pytest.approx([1.2, 0.5, -1.5, -0.8])


def test_gae_terminal_reward():
    adv = _gae([0.0, 0.0, -1.0], [0.0, 0.0, 0.0], 1.0, 1.0)
    assert adv.tolist() == [-1.0, -1.0, -1.0]
    adv = _gae([-1.0], [0.5], 0.99, 0.95)
    assert adv.tolist() == [-1.5]


def test_train_smoke_and_determinism():
    cfg = PpoConfig(updates=2, rollout_steps=64, minibatch_size=32, update_epochs=1)
    outs = []
    for _ in range(2):
        torch.manual_seed(1)
        net, curve = train_ppo(PolicyNetwork("FCN-1"), cfg)
        outs.append((policy_bytes(net), curve))
    assert len(outs[0][1]) == 2
    assert outs[0] == outs[1]


def test_policy_file_round_trip(tmp_path):
    net = PolicyNetwork("CNN-1")
    path = tmp_path / "p.bin"
    save_policy(net, path, {"n_max": 8})
    back, meta = load_policy(path)
    assert meta == {"arch": "CNN-1", "q": 100, "n_max": 8}
    for (k, a), (_, b) in zip(net.state_dict().items(), back.state_dict().items()):
        assert torch.equal(a, b), k


def test_policy_file_corruption(tmp_path):
    path = tmp_path / "p.bin"
    save_policy(PolicyNetwork("FCN-1"), path)
    raw = bytearray(path.read_bytes())
    raw[len(raw) // 2] ^= 0xFF
    path.write_bytes(bytes(raw))
    with pytest.raises(PolicyFileError):
        load_policy(path)
    path.write_bytes(b"not a policy")
    with pytest.raises(PolicyFileError):
        load_policy(path)
    with pytest.raises(PolicyFileError):
        load_policy(tmp_path / "missing.bin")


def test_episode_rewards():
    from topoalloc.neural.ppo import episode_rewards
    r = episode_rewards([3000.0, 1500.0], 48000.0)
    assert r[0] == 0.0 and r[1] == -4500.0 / 48000.0
    d = episode_rewards([3000.0, 1500.0], 48000.0, dense=True)
    assert abs(sum(d) - sum(r)) < 1e-15


def test_learning_curve_improves_on_tiny_distribution():
    dist = InstanceDistribution(radix=4, pod_count=4, job_count=(2, 3), node_range=(2, 3),
                                fill=(0.8, 1.0), busy_run=2)
    cfg = PpoConfig(updates=40, rollout_steps=128, minibatch_size=64, learning_rate=3e-3,
                    update_epochs=4, instances_per_rollout=16)
    torch.manual_seed(0)
    _, curve = train_ppo(PolicyNetwork("FCN-1"), cfg, dist)
    rewards = [row["mean_reward"] for row in curve]
    assert np.mean(rewards[-10:]) > np.mean(rewards[:10])
