import numpy as np
import pytest

from capfloc import mfn
from capfloc.errors import ContractError
from capfloc.instances import gen_euclidean
from capfloc.lp import Hyperplane, LinearProgram, solve
from helpers import enumerate_integral_solutions


def toy(nf=1, nd=1, caps=(1,), opens=(1.0,), metric=None):
    from capfloc.instances import CflInstance
    n = nf + nd
    if metric is None:
        metric = np.zeros((n, n))
    return CflInstance(open_costs=list(opens), capacities=list(caps),
                       n_clients=nd, metric=np.array(metric, dtype=float))


def test_build_capacities_no_assignment():
    inst = toy(2, 2, caps=(3, 2), opens=(1.0, 1.0))
    net = mfn.build(inst, np.zeros((2, 2)), np.ones(2), np.zeros((2, 2)))
    assert net.gate_cap[0] == pytest.approx(3.0)
    assert net.gate_cap[1] == pytest.approx(2.0)
    assert net.r[0] == net.r[1] == pytest.approx(1.0)
    assert net.r[0] * net.y[0] == pytest.approx(1.0)


def test_build_fully_assigned_client():
    inst = toy(1, 1, caps=(2,))
    g = np.array([[1.0]])
    net = mfn.build(inst, np.zeros((1, 1)), np.array([0.5]), g)
    assert net.r[0] == pytest.approx(0.0)
    assert net.r[0] * net.y[0] == pytest.approx(0.0)


def test_build_mixed_gate_capacity():
    inst = toy(1, 1, caps=(2,))
    net = mfn.build(inst, np.zeros((1, 1)), np.array([0.5]), np.array([[0.25]]))
    assert net.gate_cap[0] == pytest.approx(0.5 * (2 - 0.25))


def test_build_rejects_invalid_assignment():
    inst = toy(1, 1, caps=(1,))
    with pytest.raises(ContractError):
        mfn.build(inst, np.zeros((1, 1)), np.ones(1), np.array([[1.5]]))


def test_feasible_single_unit_path():
    inst = toy(1, 1, caps=(1,))
    net = mfn.build(inst, np.array([[1.0]]), np.array([1.0]), np.zeros((1, 1)))
    res = mfn.feasible(net)
    assert isinstance(res, mfn.CommodityFlow)
    assert res.violations(net) == []
    assert res.sink_flow[0, 0] == pytest.approx(1.0)
    (arcs, flow), = res.paths[0]
    assert flow == pytest.approx(1.0)
    assert mfn.expand_path(arcs, 0) == (("s", 0), ("f", 0), ("ft", 0), ("t", 0))


def test_infeasible_single_bottleneck_yields_separating_cut():
    inst = toy(1, 1, caps=(1,))
    x = np.array([[1.0]])
    y = np.array([0.4])
    net = mfn.build(inst, x, y, np.zeros((1, 1)))
    cut = mfn.feasible(net)
    assert isinstance(cut, Hyperplane)
    assert cut.violation(net.point()) > 1e-8
    # satisfied by every integral feasible solution of the instance
    for sol in enumerate_integral_solutions(inst):
        xs, ys = sol.to_arrays(1)
        point = {("x", 0, 0): xs[0, 0], ("y", 0): ys[0]}
        assert cut.violation(point) <= 1e-9


def _natural_lp_solution(inst):
    """Fractional optimum of the standard relaxation (costless carrier)."""
    nf, nd = inst.n_facilities, inst.n_clients
    lp = LinearProgram("min")
    xv = {(i, j): lp.add_var(0.0, 1.0, obj=float(inst.conn_costs()[i, j]))
          for i in range(nf) for j in range(nd)}
    yv = {i: lp.add_var(0.0, 1.0, obj=float(inst.open_costs[i])) for i in range(nf)}
    for j in range(nd):
        lp.add_row({xv[i, j]: 1.0 for i in range(nf)}, ">=", 1.0)
    for i in range(nf):
        coeffs = {xv[i, j]: 1.0 for j in range(nd)}
        coeffs[yv[i]] = -float(inst.capacities[i])
        lp.add_row(coeffs, "<=", 0.0)
    for i in range(nf):
        for j in range(nd):
            lp.add_row({xv[i, j]: 1.0, yv[i]: -1.0}, "<=", 0.0)
    sol = solve(lp)
    assert sol.status == "optimal"
    x = np.array([[sol.x[xv[i, j]] for j in range(nd)] for i in range(nf)])
    y = np.array([sol.x[yv[i]] for i in range(nf)])
    return x, y


def test_natural_relaxation_solutions_are_feasible_with_zero_assignment():
    for seed in (3, 4, 5):
        inst = gen_euclidean(2, 2, seed=seed, cap_range=(1, 3))
        x, y = _natural_lp_solution(inst)
        net = mfn.build(inst, x, y, np.zeros((2, 2)))
        res = mfn.feasible(net)
        assert isinstance(res, mfn.CommodityFlow)
        assert res.violations(net) == []
        assert res.n_positive_paths() <= res.lp_rows


def test_monotone_in_multiplicity():
    # anything feasible stays feasible when y is raised
    for seed in (8, 9):
        inst = gen_euclidean(3, 4, seed=seed, cap_range=(2, 4))
        x, y = _natural_lp_solution(inst)
        net = mfn.build(inst, x, y, np.zeros((3, 4)))
        assert isinstance(mfn.feasible(net), mfn.CommodityFlow)
        y_up = np.minimum(y + 0.25, 1.0)
        net_up = mfn.build(inst, x, y_up, np.zeros((3, 4)))
        assert isinstance(mfn.feasible(net_up), mfn.CommodityFlow)


def test_zero_candidate_yields_cut_on_tiny_instances():
    for seed in range(20, 30):
        inst = gen_euclidean(2, 2, seed=seed, cap_range=(1, 3))
        nf, nd = 2, 2
        net = mfn.build(inst, np.zeros((nf, nd)), np.zeros(nf), np.zeros((nf, nd)))
        cut = mfn.feasible(net)
        assert isinstance(cut, Hyperplane)
        assert cut.violation(net.point()) > 1e-8
        for sol in enumerate_integral_solutions(inst):
            xs, ys = sol.to_arrays(nf)
            point = {("x", i, j): xs[i, j] for i in range(nf) for j in range(nd)}
            point.update({("y", i): ys[i] for i in range(nf)})
            assert cut.violation(point) <= 1e-9


def test_scaled_candidates_cut_validity_by_enumeration():
    # shrink feasible fractional solutions until infeasible; all cuts must be
    # valid for every integral solution found by full enumeration
    rng = np.random.default_rng(77)
    checked = 0
    for seed in range(40, 70):
        nf, nd = int(rng.integers(1, 4)), int(rng.integers(1, 4))
        try:
            inst = gen_euclidean(nf, nd, seed=seed, cap_range=(1, 3))
        except Exception:
            continue
        x, y = _natural_lp_solution(inst)
        shrink = 0.3 + 0.4 * rng.random()
        net = mfn.build(inst, x * shrink, y * shrink, np.zeros((nf, nd)))
        res = mfn.feasible(net)
        if isinstance(res, mfn.CommodityFlow):
            continue
        checked += 1
        assert res.violation(net.point()) > 1e-8
        for sol in enumerate_integral_solutions(inst):
            xs, ys = sol.to_arrays(nf)
            point = {("x", i, j): xs[i, j] for i in range(nf) for j in range(nd)}
            point.update({("y", i): ys[i] for i in range(nf)})
            assert res.violation(point) <= 1e-9
    assert checked >= 10


def test_path_decompose_single_and_diamond():
    one = mfn.path_decompose({("sx", 0, 0): 1.0, ("it", 0): 1.0}, 0)
    assert len(one) == 1 and one[0][1] == pytest.approx(1.0)
    diamond = {("sx", 0, 0): 0.5, ("sx", 1, 0): 0.5,
               ("it", 0): 0.5, ("it", 1): 0.5}
    paths = mfn.path_decompose(diamond, 0)
    assert len(paths) == 2
    assert sum(f for _, f in paths) == pytest.approx(1.0)


def test_path_decompose_resums_to_arc_flows():
    rng = np.random.default_rng(13)
    for _ in range(20):
        # random acyclic conservative flow: superpose chains that only move
        # forward in a fixed node order, so no circulation can appear
        arcs = {}
        nf = 3
        for _ in range(8):
            f = float(rng.random())
            a = int(rng.integers(0, nf))
            chain = [("sx", a, 0)]
            if a < nf - 1 and rng.random() < 0.6:
                b = int(rng.integers(a + 1, nf))  # client index, visited after f(a)
                c = int(rng.integers(b, nf))
                chain += [("gs", a, b), ("sx", c, b), ("it", c)]
            else:
                chain += [("it", a)]
            for arc in chain:
                arcs[arc] = arcs.get(arc, 0.0) + f
        paths = mfn.path_decompose(dict(arcs), 0)
        rebuilt = {}
        for p, f in paths:
            for a in p:
                rebuilt[a] = rebuilt.get(a, 0.0) + f
        for a, f in arcs.items():
            assert rebuilt.get(a, 0.0) == pytest.approx(f, abs=1e-7)


def test_path_decompose_rejects_nonconservative():
    with pytest.raises(ContractError):
        mfn.path_decompose({("sx", 0, 1): 1.0}, 0)
