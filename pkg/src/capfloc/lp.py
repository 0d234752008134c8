"""Dense two-phase simplex with bounds, duals, basis status, and Farkas
certificates.

The solver keeps the full tableau B^-1 [A | I] and prices with Dantzig's
rule for a fixed number of pivots before switching to Bland's rule
(anti-cycling). An exact mode runs the identical pivoting over
`fractions.Fraction` entries with zero tolerances; it is intended for
small programs where exact basicness matters.

Conventions (minimization; signs flip for maximization):
  * row duals: y >= 0 on '>=' rows, y <= 0 on '<=' rows, free on '=' rows.
  * reduced costs d = c - A^T y: d >= 0 at lower bounds, d <= 0 at upper.
  * Farkas certificate (infeasible status): multipliers with the same row
    sign pattern such that sum_r y_r b_r - sup_box (sum_r y_r a_r) . x > 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import ContractError, SolverFailure

INF = float("inf")

PIVOT_TOL = 1e-9
FEAS_TOL = 1e-7


@dataclass
class AffineForm:
    """A right-hand side expressed affinely over named external parameters."""

    const: float
    terms: dict = field(default_factory=dict)

    def value(self, point: dict) -> float:
        return self.const + sum(c * point.get(k, 0.0) for k, c in self.terms.items())


@dataclass
class Hyperplane:
    """Valid inequality sum_k coeffs[k] * v[k] >= rhs over named parameters."""

    coeffs: dict
    rhs: float

    def violation(self, point: dict) -> float:
        """Positive when the point violates the inequality."""
        return self.rhs - sum(c * point.get(k, 0.0) for k, c in self.coeffs.items())


class LinearProgram:
    """Dense LP: bounded variables plus <=/=/>= rows.

    Rows may carry an AffineForm describing how their rhs depends on
    external parameters; farkas_cut uses it to lift infeasibility
    certificates into parameter space.
    """

    def __init__(self, sense: str = "min"):
        if sense not in ("min", "max"):
            raise ContractError(f"bad sense {sense!r}")
        self.sense = sense
        self.obj: list[float] = []
        self.lower: list[float] = []
        self.upper: list[float] = []
        self.rows: list[tuple[dict, str, float]] = []
        self.rhs_affine: list[AffineForm | None] = []

    @property
    def n_vars(self) -> int:
        return len(self.obj)

    @property
    def n_rows(self) -> int:
        return len(self.rows)

    def add_var(self, lb: float = 0.0, ub: float = INF, obj: float = 0.0) -> int:
        if lb > ub:
            raise ContractError(f"variable bounds [{lb}, {ub}] empty")
        if not np.isfinite(obj):
            raise ContractError("non-finite objective coefficient")
        self.obj.append(float(obj))
        self.lower.append(float(lb))
        self.upper.append(float(ub))
        return len(self.obj) - 1

    def add_row(self, coeffs: dict, rel: str, rhs: float,
                rhs_affine: AffineForm | None = None) -> int:
        if rel not in ("<=", ">=", "="):
            raise ContractError(f"bad relation {rel!r}")
        for k, v in coeffs.items():
            if not (0 <= k < self.n_vars):
                raise ContractError(f"row references undeclared variable {k}")
            if not np.isfinite(v):
                raise ContractError("non-finite row coefficient")
        if not np.isfinite(rhs):
            raise ContractError("non-finite rhs")
        self.rows.append((dict(coeffs), rel, float(rhs)))
        self.rhs_affine.append(rhs_affine)
        return len(self.rows) - 1


@dataclass
class LpSolution:
    status: str  # optimal | infeasible | unbounded
    x: np.ndarray | None = None
    objective: object = None
    duals: np.ndarray | None = None
    reduced_costs: np.ndarray | None = None
    var_status: list | None = None  # basic | lower | upper
    row_status: list | None = None  # basic (slack basic) | tight
    farkas: np.ndarray | None = None
    pivots: int = 0


# ------------------------------------------------------------------
# standardization: min c.z, A z = b (b >= 0), 0 <= z <= U
# ------------------------------------------------------------------

class _Std:
    def __init__(self, lp: LinearProgram, exact: bool):
        conv = Fraction if exact else float
        zero = conv(0)
        sign = -1 if lp.sense == "max" else 1

        self.var_map = []  # per user var: (kind, first internal col, shift/ub)
        c: list = []
        U: list = []
        self.obj_const = zero
        for j in range(lp.n_vars):
            lb, ub, cj = lp.lower[j], lp.upper[j], sign * lp.obj[j]
            if lb == -INF and ub == INF:
                self.var_map.append(("free", len(c), 0.0))
                c.extend([conv(cj), conv(-cj)])
                U.extend([INF, INF])
            elif lb == -INF:
                self.var_map.append(("neg", len(c), ub))
                self.obj_const += conv(cj) * conv(ub)
                c.append(conv(-cj))
                U.append(INF)
            else:
                self.var_map.append(("shift", len(c), lb))
                self.obj_const += conv(cj) * conv(lb)
                c.append(conv(cj))
                U.append(INF if ub == INF else conv(ub) - conv(lb))

        m = lp.n_rows
        self.slack_col = [None] * m
        for r, (_, rel, _) in enumerate(lp.rows):
            if rel != "=":
                self.slack_col[r] = len(c)
                c.append(zero)
                U.append(INF)

        n = len(c)
        A = np.full((m, n), zero, dtype=object) if exact else np.zeros((m, n))
        b = np.full(m, zero, dtype=object) if exact else np.zeros(m)
        for r, (coeffs, rel, rhs) in enumerate(lp.rows):
            acc = conv(rhs)
            for j, v in coeffs.items():
                kind, col, shift = self.var_map[j]
                if kind == "free":
                    A[r, col] += conv(v)
                    A[r, col + 1] -= conv(v)
                elif kind == "neg":
                    A[r, col] -= conv(v)
                    acc -= conv(v) * conv(shift)
                else:
                    A[r, col] += conv(v)
                    acc -= conv(v) * conv(shift)
            if rel == "<=":
                A[r, self.slack_col[r]] = conv(1)
            elif rel == ">=":
                A[r, self.slack_col[r]] = conv(-1)
            b[r] = acc

        self.flip = [1] * m
        for r in range(m):
            if b[r] < 0:
                A[r, :] = -A[r, :]
                b[r] = -b[r]
                self.flip[r] = -1

        self.A, self.b, self.c, self.U = A, b, c, U
        self.n_struct = n
        self.sign = sign


def solve(lp: LinearProgram, exact: bool = False,
          dantzig_pivots: int = 2000, max_pivots: int | None = None) -> LpSolution:
    """Solve the program; deterministic for identical input.

    Raises SolverFailure if the pivot budget is exhausted or a certificate
    fails its self-check; never returns a silently wrong answer.
    """
    std = _Std(lp, exact)
    m, n = lp.n_rows, std.n_struct
    if max_pivots is None:
        max_pivots = 20000 + 60 * (m + n)
    if exact:
        dantzig_pivots = 0  # Bland throughout: termination is exact

    zero = Fraction(0) if exact else 0.0
    one = Fraction(1) if exact else 1.0
    tol = zero if exact else PIVOT_TOL

    # artificial columns complete the initial identity basis
    basis = []
    n_total = n
    art_rows = []
    for r in range(m):
        sc = std.slack_col[r]
        if sc is not None and std.A[r, sc] == 1:
            basis.append(sc)
        else:
            basis.append(n_total)
            art_rows.append(r)
            n_total += 1
    n_art = n_total - n

    if exact:
        T = np.full((m, n_total), zero, dtype=object)
    else:
        T = np.zeros((m, n_total))
    T[:, :n] = std.A
    for k, r in enumerate(art_rows):
        T[r, n + k] = one
    beta = std.b.copy()
    U = list(std.U) + [INF] * n_art
    Uarr = np.array([u if u != INF else np.inf for u in U], dtype=float)
    fixed = np.array([u != INF and u <= tol for u in U])
    vstat = np.zeros(n_total, dtype=int)  # 0 lower, 1 upper, 2 basic
    for bv in basis:
        vstat[bv] = 2
    init_cols = list(basis)  # identity block: B^-1 = T[:, init_cols]

    c1 = np.array([zero] * n + [one] * n_art, dtype=object if exact else float)
    c2 = np.array(list(std.c) + [zero] * n_art, dtype=object if exact else float)

    pivots = [0]

    def run_phase(cvec, allow_art: bool) -> str:
        while True:
            if pivots[0] > max_pivots:
                raise SolverFailure(f"pivot budget {max_pivots} exhausted")
            cB = cvec[basis]
            d = cvec - cB.dot(T)
            use_bland = pivots[0] >= dantzig_pivots
            enter = -1
            if exact:
                for j in range(n_total):
                    if vstat[j] == 2 or fixed[j] or (not allow_art and j >= n):
                        continue
                    viol = -d[j] if vstat[j] == 0 else d[j]
                    if viol > tol:
                        enter = j
                        break
            else:
                viol = np.where(vstat == 0, -d, d)
                viol[vstat == 2] = -np.inf
                viol[fixed] = -np.inf
                if not allow_art and n_art:
                    viol[n:] = -np.inf
                if use_bland:
                    idx = np.nonzero(viol > tol)[0]
                    enter = int(idx[0]) if idx.size else -1
                else:
                    j = int(np.argmax(viol))
                    enter = j if viol[j] > tol else -1
            if enter < 0:
                return "optimal"

            sigma = one if vstat[enter] == 0 else -one
            col = T[:, enter]
            t_best = U[enter]
            leave_row = -1
            hit_upper = False
            if exact:
                for r in range(m):
                    w = sigma * col[r]
                    if w > 0:
                        t_r, upper = beta[r] / w, False
                    elif w < 0:
                        ub = U[basis[r]]
                        if ub == INF:
                            continue
                        t_r, upper = (ub - beta[r]) / (-w), True
                    else:
                        continue
                    if t_r < 0:
                        t_r = zero
                    take = (t_best == INF or t_r < t_best or
                            (t_r == t_best and leave_row >= 0 and basis[r] < basis[leave_row]))
                    if take:
                        t_best, leave_row, hit_upper = t_r, r, upper
            else:
                w = sigma * col
                ub_basis = Uarr[basis]
                t_arr = np.full(m, np.inf)
                lo_mask = w > tol
                t_arr[lo_mask] = beta[lo_mask] / w[lo_mask]
                up_mask = (w < -tol) & np.isfinite(ub_basis)
                t_arr[up_mask] = (ub_basis[up_mask] - beta[up_mask]) / (-w[up_mask])
                np.maximum(t_arr, 0.0, out=t_arr)
                row_min = t_arr.min() if m else np.inf
                span = np.inf if t_best == INF else t_best
                if row_min <= span + 1e-12 and np.isfinite(row_min):
                    ties = np.nonzero(t_arr <= row_min + 1e-12)[0]
                    bvars = np.array(basis)[ties]
                    leave_row = int(ties[int(np.argmin(bvars))])
                    t_best = float(t_arr[leave_row])
                    hit_upper = bool(up_mask[leave_row])
                    if span < t_best:
                        t_best = span
                        leave_row = -1
                elif np.isfinite(span):
                    t_best = span
                    leave_row = -1
                else:
                    return "unbounded"

            pivots[0] += 1
            if exact and t_best == INF:
                return "unbounded"
            if leave_row < 0:
                # entering variable flips to its other bound
                for r in range(m):
                    beta[r] = beta[r] - sigma * col[r] * t_best
                vstat[enter] = 1 - vstat[enter]
                continue

            enter_val = (zero if vstat[enter] == 0 else U[enter]) + sigma * t_best
            for r in range(m):
                beta[r] = beta[r] - sigma * col[r] * t_best
            leaving = basis[leave_row]
            vstat[leaving] = 1 if hit_upper else 0
            vstat[enter] = 2
            basis[leave_row] = enter
            beta[leave_row] = enter_val
            _eliminate(T, leave_row, enter, exact)

    def dual_prices(cvec):
        cB = cvec[basis]
        if exact:
            return [sum(cB[i] * T[i, init_cols[r]] for i in range(m)) for r in range(m)]
        return [float(cB.dot(T[:, init_cols[r]])) for r in range(m)]

    # ---- phase 1 ----
    if run_phase(c1, allow_art=True) == "unbounded":
        raise SolverFailure("phase-1 unbounded")  # objective bounded below by 0
    infeas = sum((beta[r] for r in range(m) if basis[r] >= n), zero)
    scale = 1.0 + (max(float(v) for v in std.b) if m else 0.0)
    feas_tol = zero if exact else FEAS_TOL * scale
    if infeas > feas_tol:
        pi = dual_prices(c1)
        farkas = np.array([std.flip[r] * pi[r] for r in range(m)],
                          dtype=object if exact else float)
        margin = farkas_margin(lp, farkas)
        if margin <= (0 if exact else FEAS_TOL * scale * 1e-2):
            raise SolverFailure(f"invalid infeasibility certificate (margin {margin})")
        return LpSolution(status="infeasible", farkas=farkas, pivots=pivots[0])

    # degenerate swaps drive leftover basic artificials out where possible
    for r in range(m):
        if basis[r] < n:
            continue
        piv_col, piv_mag = -1, tol
        for j in range(n):
            if vstat[j] != 2 and not fixed[j] and abs(T[r, j]) > piv_mag:
                piv_col, piv_mag = j, abs(T[r, j])
        if piv_col < 0:
            continue  # redundant row; artificial stays basic at ~0
        entering_at_upper = vstat[piv_col] == 1
        vstat[basis[r]] = 0
        vstat[piv_col] = 2
        basis[r] = piv_col
        beta[r] = U[piv_col] if entering_at_upper else zero
        _eliminate(T, r, piv_col, exact)

    # ---- phase 2 ----
    if run_phase(c2, allow_art=False) == "unbounded":
        return LpSolution(status="unbounded", pivots=pivots[0])

    # ---- extraction ----
    z = np.array([zero] * n_total, dtype=object if exact else float)
    for j in range(n_total):
        if vstat[j] == 1:
            z[j] = U[j]
    for r in range(m):
        z[basis[r]] = beta[r]

    pi = dual_prices(c2)
    d_int = [c2[j] - sum(pi[r] * T_orig for r, T_orig in _col_items(std.A, j, m))
             for j in range(n)]

    conv = Fraction if exact else float
    x_user = np.array([zero] * lp.n_vars, dtype=object if exact else float)
    rc_user = np.array([zero] * lp.n_vars, dtype=object if exact else float)
    vs_user = []
    for j in range(lp.n_vars):
        kind, col, shift = std.var_map[j]
        if kind == "free":
            x_user[j] = z[col] - z[col + 1]
            rc_user[j] = std.sign * d_int[col]
            vs_user.append("basic" if vstat[col] == 2 or vstat[col + 1] == 2 else "lower")
        elif kind == "neg":
            x_user[j] = conv(shift) - z[col]
            rc_user[j] = std.sign * -d_int[col]
            vs_user.append("basic" if vstat[col] == 2
                           else ("upper" if vstat[col] == 0 else "lower"))
        else:
            x_user[j] = conv(shift) + z[col]
            rc_user[j] = std.sign * d_int[col]
            vs_user.append("basic" if vstat[col] == 2
                           else ("lower" if vstat[col] == 0 else "upper"))

    duals = np.array([std.sign * std.flip[r] * pi[r] for r in range(m)],
                     dtype=object if exact else float)
    row_status = []
    for r in range(m):
        sc = std.slack_col[r]
        row_status.append("basic" if sc is not None and vstat[sc] == 2 else "tight")

    obj = std.obj_const + sum((c2[j] * z[j] for j in range(n) if z[j] != 0), zero)
    obj = std.sign * obj
    if not exact:
        x_user = x_user.astype(float)
        rc_user = rc_user.astype(float)
        duals = duals.astype(float)
        obj = float(obj)
    return LpSolution(status="optimal", x=x_user, objective=obj, duals=duals,
                      reduced_costs=rc_user, var_status=vs_user,
                      row_status=row_status, pivots=pivots[0])


def _eliminate(T, row: int, col: int, exact: bool) -> None:
    piv = T[row, col]
    if exact:
        T[row, :] = T[row, :] / piv
    else:
        T[row, :] /= piv
    fac = T[:, col].copy()
    fac[row] = Fraction(0) if exact else 0.0
    nz = np.nonzero(fac)[0]
    if nz.size:
        T[nz, :] -= np.outer(fac[nz], T[row, :])


def _col_items(A, j, m):
    for r in range(m):
        v = A[r, j]
        if v != 0:
            yield r, v


# ------------------------------------------------------------------
# certificates and helpers
# ------------------------------------------------------------------

def row_activity(lp: LinearProgram, x) -> list:
    return [sum(v * x[j] for j, v in coeffs.items()) for coeffs, _, _ in lp.rows]


def dual_objective(lp: LinearProgram, sol: LpSolution) -> float:
    """Lagrangian dual value of the returned (duals, reduced costs) pair."""
    val = sum(float(sol.duals[r]) * lp.rows[r][2] for r in range(lp.n_rows))
    for j in range(lp.n_vars):
        rc = float(sol.reduced_costs[j])
        if abs(rc) < 1e-12:
            continue
        at_lower = rc > 0 if lp.sense == "min" else rc < 0
        val += rc * (lp.lower[j] if at_lower else lp.upper[j])
    return val


def check_optimal(lp: LinearProgram, sol: LpSolution,
                  gap_tol: float = FEAS_TOL, cs_tol: float = 1e-6) -> list[str]:
    """Certify an optimal solution: primal feasibility, duality gap,
    complementary slackness, dual signs, and basicness. Empty = certified."""
    if sol.status != "optimal":
        return [f"status {sol.status}"]
    errs = []
    x = np.array([float(v) for v in sol.x])
    obj = float(sol.objective)
    scale = 1.0 + abs(obj)
    acts = [float(a) for a in row_activity(lp, x)]
    for r, (coeffs, rel, rhs) in enumerate(lp.rows):
        slack = rhs - acts[r]
        if rel == "<=" and slack < -FEAS_TOL * scale:
            errs.append(f"row {r} violated by {-slack}")
        if rel == ">=" and slack > FEAS_TOL * scale:
            errs.append(f"row {r} violated by {slack}")
        if rel == "=" and abs(slack) > FEAS_TOL * scale:
            errs.append(f"row {r} violated by {abs(slack)}")
        y = float(sol.duals[r])
        if rel != "=":
            want_nonneg = (rel == ">=") == (lp.sense == "min")
            if want_nonneg and y < -FEAS_TOL * scale:
                errs.append(f"row {r} dual sign {y}")
            if not want_nonneg and y > FEAS_TOL * scale:
                errs.append(f"row {r} dual sign {y}")
        if abs(y) * abs(slack) > cs_tol * scale:
            errs.append(f"row {r} complementary slackness {abs(y) * abs(slack)}")
    for j in range(lp.n_vars):
        rc = float(sol.reduced_costs[j])
        lo, hi = lp.lower[j], lp.upper[j]
        if x[j] < lo - FEAS_TOL * scale or x[j] > hi + FEAS_TOL * scale:
            errs.append(f"var {j} out of bounds")
        dist = min(x[j] - lo if lo != -INF else INF, hi - x[j] if hi != INF else INF)
        if dist != INF and abs(rc) * dist > cs_tol * scale:
            errs.append(f"var {j} complementary slackness {abs(rc) * dist}")
    gap = abs(obj - dual_objective(lp, sol))
    if gap > gap_tol * (1.0 + abs(obj)):
        errs.append(f"duality gap {gap}")
    n = lp.n_vars
    tight = []
    for r, (coeffs, rel, rhs) in enumerate(lp.rows):
        if abs(rhs - acts[r]) <= 1e-6 * scale:
            row = np.zeros(n)
            for jj, v in coeffs.items():
                row[jj] = v
            tight.append(row)
    for j in range(n):
        if (lp.lower[j] != -INF and abs(x[j] - lp.lower[j]) <= FEAS_TOL * scale) or \
           (lp.upper[j] != INF and abs(x[j] - lp.upper[j]) <= FEAS_TOL * scale):
            row = np.zeros(n)
            row[j] = 1.0
            tight.append(row)
    if n and (not tight or np.linalg.matrix_rank(np.array(tight), tol=1e-7) < n):
        errs.append("solution is not basic: tight system rank-deficient")
    return errs


def farkas_margin(lp: LinearProgram, farkas) -> float:
    """Certificate margin: sum_r y_r b_r - sup over the variable box of the
    aggregated row. A positive margin certifies infeasibility."""
    w: dict[int, float] = {}
    val = 0.0
    for r, (coeffs, rel, rhs) in enumerate(lp.rows):
        y = float(farkas[r])
        if (rel == ">=" and y < -1e-9) or (rel == "<=" and y > 1e-9):
            return -INF
        val += y * rhs
        for j, v in coeffs.items():
            w[j] = w.get(j, 0.0) + y * v
    for j, wj in w.items():
        if wj > 1e-9:
            if lp.upper[j] == INF:
                return -INF
            val -= wj * lp.upper[j]
        elif wj < -1e-9:
            if lp.lower[j] == -INF:
                return -INF
            val -= wj * lp.lower[j]
    return val


def farkas_cut(lp: LinearProgram, sol: LpSolution) -> Hyperplane:
    """Lift an infeasibility certificate into external-parameter space.

    Every row must carry an AffineForm rhs. The result is an inequality over
    the parameters that holds at every parameter point for which the program
    is feasible and is violated by the point that produced this program.
    """
    if sol.status != "infeasible" or sol.farkas is None:
        raise ContractError("farkas_cut needs an infeasible solution with a certificate")
    if any(a is None for a in lp.rhs_affine):
        raise ContractError("farkas_cut needs affine rhs metadata on every row")
    w: dict[int, float] = {}
    const = 0.0
    coeffs: dict = {}
    for r, (rcoeffs, _, _) in enumerate(lp.rows):
        y = float(sol.farkas[r])
        if y == 0.0:
            continue
        aff = lp.rhs_affine[r]
        const += y * aff.const
        for k, v in aff.terms.items():
            coeffs[k] = coeffs.get(k, 0.0) - y * v
        for j, v in rcoeffs.items():
            w[j] = w.get(j, 0.0) + y * v
    sup = 0.0
    for j, wj in w.items():
        if wj > 1e-9:
            if lp.upper[j] == INF:
                raise ContractError("certificate not composable with bounds")
            sup += wj * lp.upper[j]
        elif wj < -1e-9:
            if lp.lower[j] == -INF:
                raise ContractError("certificate not composable with bounds")
            sup += wj * lp.lower[j]
    return Hyperplane(coeffs=coeffs, rhs=const - sup)
