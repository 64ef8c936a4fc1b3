import numpy as np
import pytest

from conftest import make_model
from topoalloc.errors import InfeasibleError
from topoalloc.exact import (build_csp, dp_state_bound, solve_csp_dp, solve_scas,
                             solve_scas_bruteforce)
from topoalloc.allocation import check_disjoint, plan_cost
from topoalloc.verify import compare_exact, random_scas_instance


def test_single_job_takes_cheapest_window(tree4):
    m = make_model(tree4, [1, 2, 3, 4, 5], [2])
    plan = solve_csp_dp(build_csp(m))
    assert plan.total_cost == 2000.0
    assert sorted(plan.assignments[0]) in ([2, 3], [4, 5])


def test_graph_shape(tree4):
    m = make_model(tree4, range(8), [2, 3, 2])
    g = build_csp(m)
    assert g.n == 8
    assert g.demand == {2: 2, 3: 1}
    assert len(g.operation_arcs[2]) == 7 and len(g.operation_arcs[3]) == 6
    assert dp_state_bound(g) == 8 * 3 * 2


def test_plan_is_valid(tree8):
    m = make_model(tree8, range(0, 40, 2), [3, 4, 2, 5])
    plan = solve_scas(m)
    check_disjoint(plan.assignments)
    assert plan.total_cost == plan_cost(tree8, plan.assignments)
    idle = list(range(0, 40, 2))
    for job in m.jobs:
        nodes = sorted(plan.assignments[job.job_id], key=idle.index)
        pos = [idle.index(v) for v in nodes]
        assert pos == list(range(pos[0], pos[0] + job.requested_nodes))


def test_infeasible(tree4):
    m = make_model(tree4, range(5), [3, 3])
    with pytest.raises(InfeasibleError):
        solve_csp_dp(build_csp(m))
    with pytest.raises(InfeasibleError):
        solve_scas_bruteforce(m)


def test_wrap_never_hurts(tree4):
    m = make_model(tree4, [1, 3, 6, 10, 12, 14, 15], [3, 2])
    wrap = solve_scas_bruteforce(m, wrap=True).total_cost
    nowrap = solve_scas_bruteforce(m, wrap=False).total_cost
    assert wrap <= nowrap


def test_dp_agrees_with_bruteforce():
    rng = np.random.default_rng(11)
    for _ in range(100):
        same, bound = compare_exact(random_scas_instance(rng))
        assert same and bound
