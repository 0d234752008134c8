import numpy as np
import pytest

from capfloc.errors import ContractError, InfeasibleError
from capfloc.instances import CflInstance, IntegralSolution, gen_euclidean
from capfloc.oracle import exact_opt, verify
from helpers import enumerate_integral_solutions


def test_single_facility_opens_it():
    inst = gen_euclidean(1, 3, seed=2, cap_range=(3, 3))
    res = exact_opt(inst)
    assert res.opt_solution.open == frozenset({0})
    ok, cost, violations = verify(inst, res.opt_solution)
    assert ok and violations == []
    assert cost == pytest.approx(res.opt_cost)


def test_cheaper_sufficient_subset_wins():
    # facility 0 covers everything cheaply; opening both is strictly worse
    metric = np.zeros((4, 4))
    inst = CflInstance(open_costs=[1.0, 5.0], capacities=[2, 2], n_clients=2,
                       metric=metric)
    res = exact_opt(inst)
    assert res.opt_solution.open == frozenset({0})
    assert res.opt_cost == pytest.approx(1.0)


def test_oracle_matches_full_enumeration():
    for seed in range(60, 75):
        inst = gen_euclidean(3, 4, seed=seed, cap_range=(1, 3))
        res = exact_opt(inst)
        best = min(enumerate_integral_solutions(inst),
                   key=lambda s: verify(inst, s)[1])
        assert res.opt_cost == pytest.approx(verify(inst, best)[1], abs=1e-9)
        ok, _, _ = verify(inst, res.opt_solution)
        assert ok


def test_verify_flags_violations():
    inst = gen_euclidean(2, 3, seed=9, cap_range=(2, 2))
    overloaded = IntegralSolution(open={0}, assign=(0, 0, 0))
    ok, _, violations = verify(inst, overloaded)
    assert not ok and any("overloaded" in v for v in violations)
    closed = IntegralSolution(open={0}, assign=(0, 0, 1))
    ok, _, violations = verify(inst, closed)
    assert not ok and any("closed" in v for v in violations)


def test_guard_and_infeasible():
    inst = CflInstance(open_costs=[1.0, 1.0], capacities=[1, 1], n_clients=3,
                       metric=np.zeros((5, 5)))
    with pytest.raises(InfeasibleError):
        exact_opt(inst)
    big = gen_euclidean(17, 2, seed=1, cap_range=(1, 2))
    with pytest.raises(ContractError):
        exact_opt(big)
