import math

import numpy as np
import pytest

from conftest import make_model
from topoalloc.allocation import check_disjoint
from topoalloc.annealing import (SaParams, TraceRecord, acceptance_probability, anneal, destroy,
                                 empty_solution, initial_solution, place, repair_greedy,
                                 repair_order, repair_random, replay, temperature)
from topoalloc.errors import InfeasibleError
from topoalloc.instances import InstanceDistribution, sample_instances


def test_schedule_endpoints():
    p = SaParams()
    assert temperature(p, 0) == 2500.0
    assert abs(temperature(p, 500) - 2.5) <= 1e-9
    temps = [temperature(p, t) for t in range(501)]
    assert all(a > b for a, b in zip(temps, temps[1:]))


def test_bad_params():
    for kw in (dict(t_min_temp=0.0), dict(t_min_temp=3000.0), dict(max_remove=0),
               dict(max_iters=-1)):
        with pytest.raises(ValueError):
            SaParams(**kw)


def test_metropolis():
    assert acceptance_probability(10.0, 5.0, 1.0) == 1.0
    assert acceptance_probability(10.0, 10.0, 1.0) == 1.0
    assert abs(acceptance_probability(100.0, 150.0, 25.0) - math.exp(-2.0)) <= 1e-12


def test_place_shrinks_sequence(tree4):
    m = make_model(tree4, range(8), [3, 2])
    sol = place(empty_solution(m), m.jobs[0], 6)
    assert sol.assignments[0] == (6, 7, 0)
    assert sol.idle.nodes == (1, 2, 3, 4, 5)
    with pytest.raises(InfeasibleError):
        place(sol, m.jobs[0].__class__(9, 6, 1.0, 1.0), 0)


def test_initial_is_greedy_static(tree8):
    m = make_model(tree8, range(0, 64), [4, 8, 2])
    sol = initial_solution(m, strict=True)
    check_disjoint(sol.assignments)
    # the smallest job goes first and takes a same-switch pair
    assert sol.job_costs[2] == 2000.0
    assert sol.placements[0].job.job_id == 2


def test_initial_falls_back_when_fragmented(tree4):
    # the only free 4-window in the static sequence overlaps the pair
    m = make_model(tree4, [0, 1, 2, 3, 4, 5], [2, 4])
    sol = initial_solution(m)
    check_disjoint(sol.assignments)
    assert sum(len(v) for v in sol.assignments.values()) == 6


def test_replay_round_trip(tree8):
    m = sample_instances(InstanceDistribution(), 1, 3)[0]
    sol = initial_solution(m)
    again = replay(m, sol.placements)
    assert again.assignments == sol.assignments
    assert again.cost == sol.cost


def test_destroy_then_repair_keeps_jobs():
    rng = np.random.default_rng(0)
    p = SaParams()
    for m in sample_instances(InstanceDistribution(), 10, 5):
        sol = initial_solution(m)
        partial, removed = destroy(sol, p, rng)
        assert 1 <= len(removed) <= 2
        assert len(partial.placements) + len(removed) == len(sol.placements)
        for repair in (repair_random, repair_greedy):
            full = repair(partial, removed, rng)
            check_disjoint(full.assignments)
            assert set(full.assignments) == {j.job_id for j in m.jobs}
            assert full.cost == math.fsum(full.job_costs.values())


def test_repair_order_largest_first(tree4):
    m = make_model(tree4, range(16), [2, 5, 3])
    assert [j.job_id for j in repair_order(m.jobs)] == [1, 2, 0]


def test_anneal_never_worse_and_traced():
    params = SaParams(max_iters=200)
    for i, m in enumerate(sample_instances(InstanceDistribution(), 5, 9)):
        init = initial_solution(m)
        trace = []
        best = anneal(m, params, repair_random, np.random.default_rng(i), trace=trace)
        assert best.cost <= init.cost
        assert len(trace) == 200 and isinstance(trace[0], TraceRecord)
        bests = [r.best for r in trace]
        assert all(a >= b for a, b in zip(bests, bests[1:]))
        assert bests[-1] == best.cost
        check_disjoint(best.assignments)


def test_anneal_is_seeded():
    m = sample_instances(InstanceDistribution(), 1, 2)[0]
    a = anneal(m, SaParams(max_iters=100), repair_random, np.random.default_rng(4))
    b = anneal(m, SaParams(max_iters=100), repair_random, np.random.default_rng(4))
    assert a.assignments == b.assignments


def test_instances_fit():
    dist = InstanceDistribution()
    for m in sample_instances(dist, 50, 0):
        assert 8 <= len(m.jobs) <= 12
        assert m.demand_total <= len(m.idle) <= 128
        assert all(2 <= j.requested_nodes <= 8 for j in m.jobs)
