"""Reassignment-test network: build it for a candidate (x, y) and a free
partial assignment g, decide feasibility of the associated multicommodity
flow, and lift infeasibility certificates into (x, y) space.

Topology per client j (commodity j, demand r_j = 1 - sum_i g[i, j]):
  source j^s --(cap x[i,j])--> facility i --(joint cap y_i*(u_i - sum_j g[i,j]))-->
  gate i^t --(cap r_j * y_i)--> sink j^t, plus re-entry arcs i --> j'^s of
  capacity g[i, j'].

The LP is the polynomial edge form: per-commodity arc flows with joint arc
capacities. The gate pair (i -> i^t -> j^t) collapses to one variable per
(commodity, facility) carrying both the joint gate capacity and the
per-commodity sink capacity, which is exact because no other commodity can
use the sink arc of j. The exponential path form is recovered on demand by
greedy decomposition.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError, InvariantViolation
from .lp import AffineForm, Hyperplane, LinearProgram, farkas_cut, solve

ZTOL = 1e-11
DEMAND_TOL = 1e-9
SINK = ("sink",)


@dataclass(frozen=True)
class PartialAssignment:
    """Free reassignable fractional assignment; valid when it over-assigns
    neither any client (column sums <= 1) nor any capacity (row sums <= u)."""

    g: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "g", np.asarray(self.g, dtype=float))

    def violations(self, capacities, tol: float = 1e-9) -> list[str]:
        out = []
        if (self.g < -tol).any():
            out.append("negative entry")
        for j, s in enumerate(self.g.sum(axis=0)):
            if s > 1.0 + tol:
                out.append(f"client {j} over-assigned: {s}")
        for i, s in enumerate(self.g.sum(axis=1)):
            if s > capacities[i] + tol:
                out.append(f"facility {i} over-filled: {s}")
        return out


@dataclass
class MfnNetwork:
    x: np.ndarray
    y: np.ndarray
    g: np.ndarray
    capacities: np.ndarray
    r: np.ndarray            # per-client residual demand 1 - sum_i g[i, j]
    gate_slack: np.ndarray   # per-facility u_i - sum_j g[i, j]
    gate_cap: np.ndarray     # y_i * gate_slack_i

    @property
    def n_facilities(self) -> int:
        return len(self.y)

    @property
    def n_clients(self) -> int:
        return len(self.r)

    def point(self) -> dict:
        """Candidate (x, y) as a parameter dict for hyperplane evaluation."""
        p = {("y", i): float(self.y[i]) for i in range(self.n_facilities)}
        for i in range(self.n_facilities):
            for j in range(self.n_clients):
                p[("x", i, j)] = float(self.x[i, j])
        return p


def build(instance, x, y, g) -> MfnNetwork:
    """Construct the network for candidate (x, y) and partial assignment g."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    pa = g if isinstance(g, PartialAssignment) else PartialAssignment(g)
    bad = pa.violations(instance.capacities)
    if bad:
        raise ContractError(f"invalid partial assignment: {bad}")
    g = pa.g
    r = 1.0 - g.sum(axis=0)
    gate_slack = instance.capacities - g.sum(axis=1)
    gate_cap = y * gate_slack
    for name, arr in (("demand", r), ("gate", gate_cap)):
        if (arr < -1e-9).any():
            raise ContractError(f"negative {name} capacity beyond tolerance")
    return MfnNetwork(x=x, y=y, g=g, capacities=np.asarray(instance.capacities),
                      r=np.maximum(r, 0.0), gate_slack=np.maximum(gate_slack, 0.0),
                      gate_cap=np.maximum(gate_cap, 0.0))


@dataclass
class CommodityFlow:
    """Per-commodity arc flows plus their greedy path decomposition.

    Arc keys: ("sx", i, j) for j^s -> i, ("gs", i, j) for i -> j^s, and
    ("it", i) for the collapsed gate i -> i^t -> j^t of the owning commodity.
    """

    commodities: list
    flows: dict            # (j, arc) -> flow
    sink_flow: np.ndarray  # facility x client: commodity j sinking via i
    demands: np.ndarray
    paths: dict            # j -> list of (arc tuple, flow)
    lp_rows: int

    def n_positive_paths(self, tol: float = 1e-9) -> int:
        return sum(1 for plist in self.paths.values() for _, f in plist if f > tol)

    def violations(self, net: MfnNetwork, tol: float = 1e-6) -> list[str]:
        out = []
        nf, nd = net.n_facilities, net.n_clients
        arc_use: dict = {}
        for (j, arc), f in self.flows.items():
            if f < -tol:
                out.append(f"negative flow on {j}, {arc}")
            arc_use[arc] = arc_use.get(arc, 0.0) + f
        for arc, tot in arc_use.items():
            kind = arc[0]
            if kind == "sx":
                cap = net.x[arc[1], arc[2]]
            elif kind == "gs":
                cap = net.g[arc[1], arc[2]]
            else:
                cap = net.gate_cap[arc[1]]
            if tot > cap + tol:
                out.append(f"arc {arc} over capacity: {tot} > {cap}")
        for j in self.commodities:
            bal: dict = {}
            for (jj, arc), f in self.flows.items():
                if jj != j or f == 0.0:
                    continue
                if arc[0] == "sx":
                    tail, head = ("s", arc[2]), ("f", arc[1])
                elif arc[0] == "gs":
                    tail, head = ("f", arc[1]), ("s", arc[2])
                else:
                    tail, head = ("f", arc[1]), SINK
                bal[tail] = bal.get(tail, 0.0) - f
                bal[head] = bal.get(head, 0.0) + f
            for node, v in bal.items():
                if node in (("s", j), SINK):
                    continue
                if abs(v) > tol:
                    out.append(f"commodity {j} conservation broken at {node}")
            if bal.get(SINK, 0.0) < net.r[j] - tol:
                out.append(f"commodity {j} demand unmet: {bal.get(SINK, 0.0)}")
            for i in range(nf):
                f_gate = self.flows.get((j, ("it", i)), 0.0)
                if f_gate > net.r[j] * net.y[i] + tol:
                    out.append(f"sink cap broken for commodity {j} via {i}")
        return out


def _commodity_arcs(net: MfnNetwork, j: int) -> list:
    """Structurally usable arcs with positive capacity for commodity j."""
    nf, nd = net.n_facilities, net.n_clients
    arcs = []
    for i in range(nf):
        for j2 in range(nd):
            if net.x[i, j2] > ZTOL:
                arcs.append(("sx", i, j2))
            if j2 != j and net.g[i, j2] > ZTOL:
                arcs.append(("gs", i, j2))
        if net.gate_cap[i] > ZTOL and net.r[j] * net.y[i] > ZTOL:
            arcs.append(("it", i))
    return arcs


def _arc_ends(arc, j):
    if arc[0] == "sx":
        return ("s", arc[2]), ("f", arc[1])
    if arc[0] == "gs":
        return ("f", arc[1]), ("s", arc[2])
    return ("f", arc[1]), SINK


def feasible(net: MfnNetwork):
    """Either a basic feasible per-commodity flow or a separating hyperplane.

    The hyperplane holds for every (x, y) whose network (same g) is feasible
    and is strictly violated by the candidate that built `net`.
    """
    nf, nd = net.n_facilities, net.n_clients
    commodities = [j for j in range(nd) if net.r[j] > DEMAND_TOL]
    lp = LinearProgram("min")
    var_of: dict = {}
    arcs_of: dict = {}
    for j in commodities:
        arcs_of[j] = _commodity_arcs(net, j)
        for arc in arcs_of[j]:
            var_of[j, arc] = lp.add_var(0.0, obj=0.0)

    cons_row: dict = {}
    demand_row: dict = {}
    joint_row: dict = {}
    sink_row: dict = {}

    for j in commodities:
        incident: dict = {}
        for arc in arcs_of[j]:
            tail, head = _arc_ends(arc, j)
            v = var_of[j, arc]
            for node, sgn in ((tail, -1.0), (head, 1.0)):
                if node == SINK or node == ("s", j):
                    continue
                incident.setdefault(node, {})[v] = sgn
        for node, coeffs in sorted(incident.items()):
            cons_row[j, node] = lp.add_row(coeffs, "=", 0.0, rhs_affine=AffineForm(0.0))
        out_coeffs = {var_of[j, arc]: 1.0 for arc in arcs_of[j]
                      if arc[0] == "sx" and arc[2] == j}
        demand_row[j] = lp.add_row(out_coeffs, ">=", float(net.r[j]),
                                   rhs_affine=AffineForm(float(net.r[j])))

    arc_users: dict = {}
    for j in commodities:
        for arc in arcs_of[j]:
            arc_users.setdefault(arc, []).append(var_of[j, arc])
    for arc, users in sorted(arc_users.items()):
        kind = arc[0]
        if kind == "sx":
            i, j2 = arc[1], arc[2]
            aff = AffineForm(0.0, {("x", i, j2): 1.0})
            cap = net.x[i, j2]
        elif kind == "gs":
            aff = AffineForm(float(net.g[arc[1], arc[2]]))
            cap = net.g[arc[1], arc[2]]
        else:
            i = arc[1]
            aff = AffineForm(0.0, {("y", i): float(net.gate_slack[i])})
            cap = net.gate_cap[i]
        joint_row[arc] = lp.add_row({v: 1.0 for v in users}, "<=", float(cap),
                                    rhs_affine=aff)
    for j in commodities:
        for arc in arcs_of[j]:
            if arc[0] != "it":
                continue
            i = arc[1]
            sink_row[j, i] = lp.add_row(
                {var_of[j, arc]: 1.0}, "<=", float(net.r[j] * net.y[i]),
                rhs_affine=AffineForm(0.0, {("y", i): float(net.r[j])}))

    sol = solve(lp)
    if sol.status == "optimal":
        flows = {key: float(sol.x[v]) for key, v in var_of.items()}
        sink = np.zeros((nf, nd))
        for (j, arc), f in flows.items():
            if arc[0] == "it":
                sink[arc[1], j] = f
        paths = {}
        for j in commodities:
            per_arc = {arc: flows[j, arc] for arc in arcs_of[j] if flows[j, arc] > 1e-9}
            paths[j] = path_decompose(per_arc, j)
        cf = CommodityFlow(commodities=commodities, flows=flows, sink_flow=sink,
                           demands=net.r.copy(), paths=paths, lp_rows=lp.n_rows)
        if cf.n_positive_paths() > lp.n_rows:
            raise InvariantViolation("basic flow decomposed into more paths than rows")
        return cf

    base = farkas_cut(lp, sol)
    coeffs = dict(base.coeffs)
    rhs = base.rhs
    y = sol.farkas

    def mult(row_key, table):
        row = table.get(row_key)
        return float(y[row]) if row is not None else 0.0

    # re-cover columns of arcs dropped at zero candidate capacity: choose a
    # virtual multiplier for the dropped capacity row so the aggregation stays
    # a valid consequence at every (x, y); the added terms vanish at the
    # candidate, so the violation is untouched.
    for j in commodities:
        have = set(arcs_of[j])
        y_dem = float(y[demand_row[j]])
        for i in range(nf):
            for j2 in range(nd):
                arc = ("sx", i, j2)
                if arc in have:
                    continue
                combo = mult((j, ("f", i)), cons_row)
                if j2 == j:
                    combo += y_dem
                else:
                    combo -= mult((j, ("s", j2)), cons_row)
                if combo > 1e-12:
                    key = ("x", i, j2)
                    coeffs[key] = coeffs.get(key, 0.0) + combo
                arc = ("gs", i, j2)
                if j2 != j and arc not in have:
                    combo = mult((j, ("s", j2)), cons_row) - mult((j, ("f", i)), cons_row)
                    if combo > 1e-12:
                        rhs -= combo * float(net.g[i, j2])  # constant cap, ~0
            arc = ("it", i)
            if arc not in have:
                combo = -mult((j, ("f", i)), cons_row)
                if arc in joint_row:
                    combo += float(y[joint_row[arc]])
                if combo > 1e-12:
                    scale = min(float(net.r[j]), float(net.gate_slack[i]))
                    key = ("y", i)
                    coeffs[key] = coeffs.get(key, 0.0) + combo * scale
    cut = Hyperplane(coeffs=coeffs, rhs=rhs)
    if cut.violation(net.point()) <= 1e-9:
        raise InvariantViolation("lifted cut does not separate the candidate")
    return cut


def path_decompose(edge_flows: dict, commodity: int) -> list:
    """Greedy source-to-sink stripping of one commodity's conservative arc
    flows; leftover circulations are stripped and discarded.

    Returns a list of (arc tuple, flow) pairs; the flows re-sum to the
    source throughput.
    """
    source = ("s", commodity)
    flows = {a: f for a, f in edge_flows.items() if f > 1e-9}
    balance: dict = {}
    for arc, f in flows.items():
        tail, head = _arc_ends(arc, commodity)
        balance[tail] = balance.get(tail, 0.0) - f
        balance[head] = balance.get(head, 0.0) + f
    for node, v in balance.items():
        if node not in (source, SINK) and abs(v) > 1e-7:
            raise ContractError(f"flow not conservative at {node}: {v}")

    def outgoing(node):
        return sorted(a for a in flows if _arc_ends(a, commodity)[0] == node)

    def strip(arcs):
        bot = min(flows[a] for a in arcs)
        for a in arcs:
            flows[a] -= bot
            if flows[a] <= 1e-9:
                del flows[a]
        return bot

    paths = []
    while True:
        walk = []
        seen = {source}
        node = source
        outcome = "deadend"
        while True:
            outs = outgoing(node)
            if not outs:
                break
            arc = outs[0]
            head = _arc_ends(arc, commodity)[1]
            walk.append(arc)
            if head == SINK:
                outcome = "path"
                break
            if head in seen:
                outcome = "cycle"
                break
            seen.add(head)
            node = head
        if outcome == "path":
            paths.append((tuple(walk), strip(walk)))
        elif outcome == "cycle":
            head = _arc_ends(walk[-1], commodity)[1]
            k = next(idx for idx, a in enumerate(walk)
                     if _arc_ends(a, commodity)[0] == head)
            strip(walk[k:])  # circulation: discard
        elif walk:
            del flows[walk[-1]]  # tolerance-level dead end
        else:
            break
    return paths


def expand_path(arcs, commodity: int) -> tuple:
    """Node sequence of a decomposed path, with the gate pair expanded."""
    nodes = [("s", commodity)]
    for arc in arcs:
        if arc[0] == "sx":
            nodes.append(("f", arc[1]))
        elif arc[0] == "gs":
            nodes.append(("s", arc[2]))
        else:
            nodes.extend([("ft", arc[1]), ("t", commodity)])
    return tuple(nodes)
