"""Instance model: validation, random generation, costs, and JSON I/O.

An instance has facilities (opening cost + integral hard capacity),
unit-demand clients, and a dense metric over facility and client sites,
indexed facilities-first.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, InfeasibleError, ParseError

METRIC_TOL = 1e-9

_MASK64 = (1 << 64) - 1


class Xorshift64Star:
    """xorshift64* generator: integer-only transitions, so streams are
    reproducible across platforms for a fixed seed."""

    _MULT = 0x2545F4914F6CDD1D

    def __init__(self, seed: int):
        # splitmix64 scramble turns small seeds into well-mixed nonzero state
        s = (int(seed) + 0x9E3779B97F4A7C15) & _MASK64
        s = ((s ^ (s >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        s = ((s ^ (s >> 27)) * 0x94D049BB133111EB) & _MASK64
        s ^= s >> 31
        self._state = s if s else 0x9E3779B97F4A7C15

    def next_u64(self) -> int:
        x = self._state
        x ^= x >> 12
        x = (x ^ (x << 25)) & _MASK64
        x ^= x >> 27
        self._state = x
        return (x * self._MULT) & _MASK64

    def uniform(self, lo: float = 0.0, hi: float = 1.0) -> float:
        return lo + (hi - lo) * ((self.next_u64() >> 11) * (1.0 / (1 << 53)))

    def randint(self, lo: int, hi: int) -> int:
        """Uniform integer in [lo, hi], both ends inclusive."""
        if hi < lo:
            raise ContractError(f"empty integer range [{lo}, {hi}]")
        return lo + self.next_u64() % (hi - lo + 1)


@dataclass(frozen=True)
class CflInstance:
    """Facilities with hard capacities, unit-demand clients, and a metric.

    ``metric[a, b]`` is the distance between sites a and b where sites
    0..n_facilities-1 are facilities and the rest are clients.
    ``cardinality_costs`` is derived: true iff every opening cost is 1.
    """

    open_costs: np.ndarray
    capacities: np.ndarray
    n_clients: int
    metric: np.ndarray
    cardinality_costs: bool = field(init=False)

    def __post_init__(self):
        oc = np.asarray(self.open_costs, dtype=float).copy()
        caps = np.asarray(self.capacities, dtype=int).copy()
        met = np.asarray(self.metric, dtype=float).copy()
        for arr in (oc, caps, met):
            arr.setflags(write=False)
        object.__setattr__(self, "open_costs", oc)
        object.__setattr__(self, "capacities", caps)
        object.__setattr__(self, "metric", met)
        object.__setattr__(self, "cardinality_costs", bool(np.all(oc == 1.0)))

    @property
    def n_facilities(self) -> int:
        return len(self.open_costs)

    @property
    def n_sites(self) -> int:
        return self.n_facilities + self.n_clients

    def dist(self, facility: int, client: int) -> float:
        return float(self.metric[facility, self.n_facilities + client])

    def conn_costs(self) -> np.ndarray:
        """Facility-by-client block of the metric."""
        nf = self.n_facilities
        return self.metric[:nf, nf:]


@dataclass(frozen=True)
class FractionalSolution:
    """Multiplicity values y per facility and assignment values x per pair."""

    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "x", np.asarray(self.x, dtype=float))
        object.__setattr__(self, "y", np.asarray(self.y, dtype=float))

    def range_violations(self, tol: float = 1e-9) -> list[str]:
        out = []
        for name, arr in (("x", self.x), ("y", self.y)):
            if not np.all(np.isfinite(arr)):
                out.append(f"{name} has non-finite entries")
                continue
            if arr.size and (arr.min() < -tol or arr.max() > 1.0 + tol):
                out.append(f"{name} outside [0, 1] by more than {tol}")
        return out


@dataclass(frozen=True)
class IntegralSolution:
    """Open facility set and a client -> facility assignment."""

    open: frozenset
    assign: tuple

    def __post_init__(self):
        object.__setattr__(self, "open", frozenset(self.open))
        object.__setattr__(self, "assign", tuple(int(a) for a in self.assign))

    def to_arrays(self, n_facilities: int) -> tuple[np.ndarray, np.ndarray]:
        x = np.zeros((n_facilities, len(self.assign)))
        for j, i in enumerate(self.assign):
            x[i, j] = 1.0
        y = np.zeros(n_facilities)
        y[list(self.open)] = 1.0
        return x, y


def cost(inst: CflInstance, x, y) -> float:
    """Total cost: opening costs weighted by y plus connection costs weighted by x."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return float(np.dot(inst.open_costs, y) + np.sum(inst.conn_costs() * x))


def solution_cost(inst: CflInstance, sol: IntegralSolution) -> float:
    x, y = sol.to_arrays(inst.n_facilities)
    return cost(inst, x, y)


def validate(inst: CflInstance, check_triangle: bool = True) -> list[str]:
    """Return a list of invariant violations; empty means the instance is valid.

    The triangle scan is cubic in the site count; pass check_triangle=False
    for large instances.
    """
    v = []
    n = inst.n_sites
    m = inst.metric
    if m.shape != (n, n):
        v.append(f"metric shape {m.shape} != ({n}, {n})")
        return v
    if not np.all(np.isfinite(m)):
        v.append("metric has non-finite entries")
        return v
    bad = np.argwhere(np.abs(m - m.T) > METRIC_TOL)
    for a, b in bad[: len(bad) // 2 + 1]:
        if a < b:
            v.append(f"metric not symmetric at ({a}, {b})")
    for a in np.nonzero(np.abs(np.diag(m)) > METRIC_TOL)[0]:
        v.append(f"metric diagonal nonzero at {a}")
    neg = np.argwhere(m < -METRIC_TOL)
    for a, b in neg:
        v.append(f"metric negative at ({a}, {b})")
    if check_triangle:
        for b in range(n):
            slack = m - (m[:, b][:, None] + m[b, :][None, :])
            for a, c in np.argwhere(slack > METRIC_TOL):
                v.append(f"triangle violated on ({a}, {b}, {c}): "
                         f"{m[a, c]:.12g} > {m[a, b]:.12g} + {m[b, c]:.12g}")
    for i, cap in enumerate(inst.capacities):
        if cap < 1:
            v.append(f"facility {i} capacity {cap} < 1")
    for i, oc in enumerate(inst.open_costs):
        if not math.isfinite(oc) or oc < 0:
            v.append(f"facility {i} open cost {oc} negative or non-finite")
    return v


def gen_euclidean(n_f: int, n_d: int, seed: int,
                  cost_range: tuple[float, float] = (0.1, 1.2),
                  cap_range: tuple[int, int] = (1, 4),
                  cardinality: bool = False) -> CflInstance:
    """Random Euclidean instance: sites uniform in the unit square.

    Capacities are resampled until total capacity covers the clients, so the
    output always admits a feasible solution. Deterministic for fixed inputs.
    """
    if n_f < 1 or n_d < 1:
        raise ContractError("need at least one facility and one client")
    if cost_range[0] > cost_range[1] or cap_range[0] > cap_range[1]:
        raise ContractError("empty range")
    if cap_range[0] < 1:
        raise ContractError("capacities must be >= 1")
    if cap_range[1] * n_f < n_d:
        raise InfeasibleError(
            f"cap_range {cap_range} cannot cover {n_d} clients with {n_f} facilities")
    rng = Xorshift64Star(seed)
    pts = np.array([[rng.uniform(), rng.uniform()] for _ in range(n_f + n_d)])
    if cardinality:
        open_costs = np.ones(n_f)
    else:
        open_costs = np.array([rng.uniform(*cost_range) for _ in range(n_f)])
    while True:
        caps = np.array([rng.randint(*cap_range) for _ in range(n_f)])
        if caps.sum() >= n_d:
            break
    diff = pts[:, None, :] - pts[None, :, :]
    metric = np.sqrt((diff ** 2).sum(axis=2))
    return CflInstance(open_costs=open_costs, capacities=caps,
                       n_clients=n_d, metric=metric)


def save_instance(path, inst: CflInstance) -> None:
    payload = {
        "facilities": [{"open_cost": float(o), "capacity": int(u)}
                       for o, u in zip(inst.open_costs, inst.capacities)],
        "n_clients": inst.n_clients,
        "metric": [[float(v) for v in row] for row in inst.metric],
    }
    with open(path, "w") as fh:
        json.dump(payload, fh)
        fh.write("\n")


def load_instance(path) -> CflInstance:
    """Parse an instance file. Parsing does not validate metric invariants."""
    try:
        with open(path) as fh:
            payload = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: line {exc.lineno} col {exc.colno}: {exc.msg}") from exc
    except OSError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    try:
        facs = payload["facilities"]
        open_costs = [f["open_cost"] for f in facs]
        caps = [f["capacity"] for f in facs]
        n_clients = int(payload["n_clients"])
        metric = np.array(payload["metric"], dtype=float)
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"{path}: bad instance payload: {exc}") from exc
    n = len(facs) + n_clients
    if metric.shape != (n, n):
        raise ParseError(f"{path}: metric shape {metric.shape} != ({n}, {n})")
    return CflInstance(open_costs=open_costs, capacities=caps,
                       n_clients=n_clients, metric=metric)
