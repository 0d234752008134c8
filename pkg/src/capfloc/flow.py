"""Max-flow, min-cost flow, fractional bipartite b-matching, and
alternating-path reachability on the matching residual graph."""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, InfeasibleError

EPS = 1e-12
SLACK_TOL = 1e-7


@dataclass
class FlowNetwork:
    """Arc-list network with residual bookkeeping (reverse arcs paired)."""

    n_nodes: int
    tails: list = field(default_factory=list)
    heads: list = field(default_factory=list)
    caps: list = field(default_factory=list)
    costs: list = field(default_factory=list)
    adj: list = field(default_factory=list)

    def __post_init__(self):
        if not self.adj:
            self.adj = [[] for _ in range(self.n_nodes)]

    def add_arc(self, tail: int, head: int, cap: float, cost: float = 0.0) -> int:
        if cap < 0 or not np.isfinite(cap):
            raise ContractError(f"bad capacity {cap}")
        idx = len(self.caps)
        self.tails += [tail, head]
        self.heads += [head, tail]
        self.caps += [float(cap), 0.0]
        self.costs += [float(cost), -float(cost)]
        self.adj[tail].append(idx)
        self.adj[head].append(idx + 1)
        return idx


def max_flow(net: FlowNetwork, s: int, t: int) -> tuple[float, np.ndarray]:
    """Edmonds-Karp. Returns (value, flow per forward arc)."""
    res = list(net.caps)
    value = 0.0
    while True:
        parent = [-1] * net.n_nodes
        parent_arc = [-1] * net.n_nodes
        parent[s] = s
        queue = [s]
        qi = 0
        while qi < len(queue) and parent[t] < 0:
            v = queue[qi]
            qi += 1
            for a in net.adj[v]:
                w = net.heads[a]
                if parent[w] < 0 and res[a] > EPS:
                    parent[w] = v
                    parent_arc[w] = a
                    queue.append(w)
        if parent[t] < 0:
            break
        bottleneck = float("inf")
        v = t
        while v != s:
            a = parent_arc[v]
            bottleneck = min(bottleneck, res[a])
            v = net.tails[a]
        v = t
        while v != s:
            a = parent_arc[v]
            res[a] -= bottleneck
            res[a ^ 1] += bottleneck
            v = net.tails[a]
        value += bottleneck
    flows = np.array([net.caps[2 * k] - res[2 * k] for k in range(len(net.caps) // 2)])
    return value, flows


def min_cost_flow(net: FlowNetwork, s: int, t: int, amount: float) -> tuple[float, float, np.ndarray]:
    """Successive shortest paths with potentials (costs must be >= 0).

    Pushes up to `amount`; returns (flow value, total cost, flow per arc).
    """
    res = list(net.caps)
    n = net.n_nodes
    pot = [0.0] * n
    sent = 0.0
    total_cost = 0.0
    while sent < amount - EPS:
        dist = [float("inf")] * n
        parent_arc = [-1] * n
        dist[s] = 0.0
        heap = [(0.0, s)]
        while heap:
            d, v = heapq.heappop(heap)
            if d > dist[v] + EPS:
                continue
            for a in net.adj[v]:
                if res[a] <= EPS:
                    continue
                w = net.heads[a]
                nd = d + net.costs[a] + pot[v] - pot[w]
                if nd < dist[w] - EPS:
                    dist[w] = nd
                    parent_arc[w] = a
                    heapq.heappush(heap, (nd, w))
        if dist[t] == float("inf"):
            break
        for v in range(n):
            if dist[v] < float("inf"):
                pot[v] += dist[v]
        bottleneck = amount - sent
        v = t
        while v != s:
            a = parent_arc[v]
            bottleneck = min(bottleneck, res[a])
            v = net.tails[a]
        v = t
        while v != s:
            a = parent_arc[v]
            res[a] -= bottleneck
            res[a ^ 1] += bottleneck
            total_cost += net.costs[a] * bottleneck
            v = net.tails[a]
        sent += bottleneck
    flows = np.array([net.caps[2 * k] - res[2 * k] for k in range(len(net.caps) // 2)])
    return sent, total_cost, flows


def min_cost_assignment(capacities, costs) -> np.ndarray:
    """Min connection cost integral assignment of every client to a facility.

    `capacities[i]` is integral; `costs[i, j]` is the facility-client cost.
    Integrality comes for free from unit client supplies and integral
    capacities. Raises InfeasibleError when total capacity is short.
    """
    capacities = np.asarray(capacities, dtype=int)
    costs = np.asarray(costs, dtype=float)
    n_fac, n_cli = costs.shape
    if capacities.sum() < n_cli:
        raise InfeasibleError(
            f"total capacity {capacities.sum()} < {n_cli} clients")
    # node layout: source, clients, facilities, sink
    net = FlowNetwork(2 + n_cli + n_fac)
    s, t = 0, 1 + n_cli + n_fac
    client_arcs = [net.add_arc(s, 1 + j, 1.0) for j in range(n_cli)]
    pair_arcs = {}
    for j in range(n_cli):
        for i in range(n_fac):
            pair_arcs[i, j] = net.add_arc(1 + j, 1 + n_cli + i, 1.0, costs[i, j])
    for i in range(n_fac):
        net.add_arc(1 + n_cli + i, t, float(capacities[i]))
    sent, _, flows = min_cost_flow(net, s, t, float(n_cli))
    if sent < n_cli - 1e-9:
        raise InfeasibleError("assignment flow fell short")  # cannot happen: complete bipartite
    assign = np.full(n_cli, -1, dtype=int)
    for (i, j), a in pair_arcs.items():
        if flows[a // 2] > 0.5:
            assign[j] = i
    if (assign < 0).any():
        raise InfeasibleError("client left unassigned")
    return assign


def max_b_matching(edge_caps, fac_caps) -> np.ndarray:
    """Maximum fractional b-matching on a complete bipartite graph.

    `edge_caps[i, j]` bounds the matching value on edge (facility i, client j),
    each client matches at most 1 in total, facility i at most fac_caps[i].
    Solved as max-flow from a client-side source to a facility-side sink.
    """
    edge_caps = np.asarray(edge_caps, dtype=float)
    fac_caps = np.asarray(fac_caps, dtype=float)
    n_fac, n_cli = edge_caps.shape
    if n_fac == 0 or n_cli == 0:
        return np.zeros((n_fac, n_cli))
    net = FlowNetwork(2 + n_cli + n_fac)
    s, t = 0, 1 + n_cli + n_fac
    for j in range(n_cli):
        net.add_arc(s, 1 + j, 1.0)
    pair_arcs = {}
    for j in range(n_cli):
        for i in range(n_fac):
            if edge_caps[i, j] > EPS:
                pair_arcs[i, j] = net.add_arc(1 + j, 1 + n_cli + i, edge_caps[i, j])
    for i in range(n_fac):
        net.add_arc(1 + n_cli + i, t, fac_caps[i])
    _, flows = max_flow(net, s, t)
    h = np.zeros((n_fac, n_cli))
    for (i, j), a in pair_arcs.items():
        h[i, j] = flows[a // 2]
    return h


def tightly_occupied(h, edge_caps, slack_tol: float = SLACK_TOL):
    """Facilities reachable from a partially-assigned client by an
    alternating path (client->facility steps below edge capacity,
    facility->client steps carrying positive matching value).

    Returns (facility set, client set) of everything the search reaches;
    clients include the partially-assigned start vertices.
    """
    h = np.asarray(h, dtype=float)
    caps = np.asarray(edge_caps, dtype=float)
    if h.shape != caps.shape:
        raise ContractError("matching and capacity shapes differ")
    n_fac, n_cli = h.shape
    start = [j for j in range(n_cli) if h[:, j].sum() < 1.0 - slack_tol]
    seen_cli = set(start)
    seen_fac: set[int] = set()
    stack = list(start)
    while stack:
        j = stack.pop()
        for i in range(n_fac):
            if i not in seen_fac and h[i, j] < caps[i, j] - slack_tol:
                seen_fac.add(i)
                for j2 in range(n_cli):
                    if j2 not in seen_cli and h[i, j2] > slack_tol:
                        seen_cli.add(j2)
                        stack.append(j2)
    return seen_fac, seen_cli
