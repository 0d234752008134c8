"""Independent brute-force oracles used to freeze expected values in tests.

These deliberately avoid the code paths they check: LPs are solved by
enumerating candidate vertices, flows by enumerating cuts, assignments by
exhaustive enumeration.
"""

import itertools

import numpy as np

from capfloc.instances import CflInstance, IntegralSolution
from capfloc.lp import INF, LinearProgram


def vertex_enum_solve(lp: LinearProgram):
    """Enumerate candidate vertices (intersections of n tight constraints).

    Only valid when every variable has finite lower and upper bounds, so the
    feasible region is a polytope. Returns (status, objective, x).
    """
    n = lp.n_vars
    rows = []
    rhs = []
    for coeffs, rel, b in lp.rows:
        a = np.zeros(n)
        for j, v in coeffs.items():
            a[j] = v
        rows.append((a, rel, b))
    cands = []
    for a, rel, b in rows:
        cands.append((a, b))
    for j in range(n):
        e = np.zeros(n)
        e[j] = 1.0
        cands.append((e, lp.lower[j]))
        cands.append((e, lp.upper[j]))

    def feasible(x):
        for a, rel, b in rows:
            act = a.dot(x)
            if rel == "<=" and act > b + 1e-8:
                return False
            if rel == ">=" and act < b - 1e-8:
                return False
            if rel == "=" and abs(act - b) > 1e-8:
                return False
        for j in range(n):
            if x[j] < lp.lower[j] - 1e-8 or x[j] > lp.upper[j] + 1e-8:
                return False
        return True

    best = None
    best_x = None
    obj = np.array(lp.obj)
    for subset in itertools.combinations(range(len(cands)), n):
        A = np.array([cands[k][0] for k in subset])
        b = np.array([cands[k][1] for k in subset])
        if abs(np.linalg.det(A)) < 1e-10:
            continue
        x = np.linalg.solve(A, b)
        if not feasible(x):
            continue
        val = obj.dot(x)
        if best is None or (val < best if lp.sense == "min" else val > best):
            best = val
            best_x = x
    if best is None:
        return "infeasible", None, None
    return "optimal", float(best), best_x


def enumerate_integral_solutions(inst: CflInstance):
    """All feasible integral solutions of a tiny instance."""
    nf, nd = inst.n_facilities, inst.n_clients
    out = []
    for mask in range(1, 1 << nf):
        opened = [i for i in range(nf) if mask >> i & 1]
        if sum(inst.capacities[i] for i in opened) < nd:
            continue
        for assign in itertools.product(opened, repeat=nd):
            loads = {}
            for i in assign:
                loads[i] = loads.get(i, 0) + 1
            if all(loads[i] <= inst.capacities[i] for i in loads):
                out.append(IntegralSolution(open=frozenset(opened), assign=assign))
    return out


def enumerate_st_cuts(n_nodes, arcs, s, t):
    """Minimum s-t cut value by enumerating all node bipartitions."""
    others = [v for v in range(n_nodes) if v not in (s, t)]
    best = INF
    for mask in range(1 << len(others)):
        side = {s}
        for k, v in enumerate(others):
            if mask >> k & 1:
                side.add(v)
        val = sum(cap for tail, head, cap in arcs if tail in side and head not in side)
        best = min(best, val)
    return best


def enumerate_best_assignment(capacities, costs):
    """Exhaustive min-cost capacity-respecting assignment, or None."""
    n_fac = len(capacities)
    n_cli = costs.shape[1]
    best = None
    for assign in itertools.product(range(n_fac), repeat=n_cli):
        loads = [0] * n_fac
        for i in assign:
            loads[i] += 1
        if any(loads[i] > capacities[i] for i in range(n_fac)):
            continue
        val = sum(costs[i, j] for j, i in enumerate(assign))
        if best is None or val < best:
            best = val
    return best
