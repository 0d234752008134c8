"""Brute-force exact solver and solution verifier for desk-scale
certification runs."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import flow
from .errors import ContractError, InfeasibleError
from .instances import CflInstance, IntegralSolution, solution_cost

MAX_FACILITIES = 16


@dataclass
class OracleResult:
    opt_cost: float
    opt_solution: IntegralSolution
    subsets_examined: int


def exact_opt(inst: CflInstance) -> OracleResult:
    """Global optimum by enumerating facility subsets in Gray-code order
    (incremental capacity bookkeeping) and solving a min-cost assignment
    on each subset with enough capacity."""
    nf, nd = inst.n_facilities, inst.n_clients
    if nf > MAX_FACILITIES:
        raise ContractError(f"{nf} facilities exceed the oracle guard ({MAX_FACILITIES})")
    conn = inst.conn_costs()
    best_cost = None
    best_sol = None
    examined = 0
    cap_sum = 0
    open_sum = 0.0
    prev_gray = 0
    for k in range(1, 1 << nf):
        gray = k ^ (k >> 1)
        bit = gray ^ prev_gray
        i = bit.bit_length() - 1
        if gray & bit:
            cap_sum += int(inst.capacities[i])
            open_sum += float(inst.open_costs[i])
        else:
            cap_sum -= int(inst.capacities[i])
            open_sum -= float(inst.open_costs[i])
        prev_gray = gray
        if cap_sum < nd:
            continue
        if best_cost is not None and open_sum >= best_cost:
            continue  # connection costs are nonnegative
        opened = [i for i in range(nf) if gray >> i & 1]
        examined += 1
        assign_local = flow.min_cost_assignment(inst.capacities[opened], conn[opened, :])
        assign = tuple(opened[a] for a in assign_local)
        total = open_sum + sum(conn[assign[j], j] for j in range(nd))
        if best_cost is None or total < best_cost - 1e-12:
            best_cost = total
            best_sol = IntegralSolution(open=frozenset(opened), assign=assign)
    if best_sol is None:
        raise InfeasibleError("no facility subset covers the clients")
    return OracleResult(opt_cost=float(best_cost), opt_solution=best_sol,
                        subsets_examined=examined)


def verify(inst: CflInstance, sol: IntegralSolution):
    """Check assignment completeness, capacities, and open-facility-only
    service. Returns (feasible, cost, violations)."""
    violations = []
    nf, nd = inst.n_facilities, inst.n_clients
    if len(sol.assign) != nd:
        violations.append(f"assignment covers {len(sol.assign)} of {nd} clients")
    loads = np.zeros(nf, dtype=int)
    for j, i in enumerate(sol.assign):
        if not (0 <= i < nf):
            violations.append(f"client {j} assigned to unknown facility {i}")
            continue
        loads[i] += 1
        if i not in sol.open:
            violations.append(f"client {j} assigned to closed facility {i}")
    for i in sol.open:
        if loads[i] > inst.capacities[i]:
            violations.append(f"facility {i} overloaded: {loads[i]} > {inst.capacities[i]}")
    return not violations, solution_cost(inst, sol), violations
