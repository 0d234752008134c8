"""Command-line front end: generate, solve, exact, verify, bench.

Exit codes: 0 success, 2 infeasible, 3 invariant violation or solver
failure, 64 usage error.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from concurrent.futures import ProcessPoolExecutor

from . import cfl, cflcfc, oracle
from .errors import (CapflocError, ContractError, InfeasibleError,
                     InvariantViolation, ParseError, SolverFailure)
from .instances import (IntegralSolution, gen_euclidean, load_instance,
                        save_instance, validate)

BENCH_COLUMNS = ["seed", "alg", "alpha", "nf", "nd", "cost", "lp_bound", "opt",
                 "ratio_lp", "ratio_opt", "cuts", "iters", "ms", "invariants_ok"]

EXIT_OK = 0
EXIT_INFEASIBLE = 2
EXIT_INVARIANT = 3
EXIT_USAGE = 64


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _parse_seeds(spec: str) -> list[int]:
    if ".." in spec:
        lo, hi = spec.split("..", 1)
        return list(range(int(lo), int(hi) + 1))
    return [int(tok) for tok in spec.split(",") if tok]


def _run_report(inst, path, alg, alpha, tol, seed=None, crosscheck=False) -> dict:
    t0 = time.perf_counter()
    if alg == "cfl":
        res = cfl.solve_cfl(inst, cfl.RoundingParams(alpha=alpha, tol=tol))
        cuts, iters = res.cuts, res.rounds
    else:
        res = cflcfc.solve_cflcfc(inst)
        cuts, iters = 0, len(res.clusters)
    ms = (time.perf_counter() - t0) * 1000.0
    lb = res.lower_bound if alg == "cfl" else res.lp_bound
    report = {
        "instance": str(path),
        "algorithm": alg,
        "params": {"alpha": alpha, "tol": tol, "seed": seed},
        "cost": res.cost,
        "lower_bound": lb,
        "ratio": res.cost / lb if lb > 0 else 1.0,
        "wall_ms": ms,
        "cuts": cuts,
        "iterations": iters,
        "invariants": dict(res.invariants),
        "opt_cost": None,
        "ratio_vs_opt": None,
        "solution": {"open": sorted(res.solution.open),
                     "assign": list(res.solution.assign)},
    }
    if crosscheck and inst.n_facilities <= 12:
        opt = oracle.exact_opt(inst)
        report["opt_cost"] = opt.opt_cost
        report["ratio_vs_opt"] = res.cost / opt.opt_cost if opt.opt_cost > 0 else 1.0
    return report


def cmd_gen(args) -> int:
    inst = gen_euclidean(args.facilities, args.clients, seed=args.seed,
                         cost_range=tuple(args.cost_range),
                         cap_range=tuple(int(v) for v in args.cap_range),
                         cardinality=args.cardinality)
    problems = validate(inst)
    if problems:
        raise InvariantViolation(f"generated instance failed validation: {problems[:3]}")
    save_instance(args.out, inst)
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_solve(args) -> int:
    inst = load_instance(getattr(args, "in"))
    report = _run_report(inst, getattr(args, "in"), args.alg, args.alpha, args.tol,
                         crosscheck=args.exact_crosscheck)
    with open(args.out, "w") as fh:
        json.dump(report, fh, indent=2)
        fh.write("\n")
    if args.solution_out:
        with open(args.solution_out, "w") as fh:
            json.dump(report["solution"], fh)
            fh.write("\n")
    print(f"cost={report['cost']:.6g} lower_bound={report['lower_bound']:.6g} "
          f"ratio={report['ratio']:.4f} cuts={report['cuts']}")
    return EXIT_OK


def cmd_exact(args) -> int:
    inst = load_instance(getattr(args, "in"))
    res = oracle.exact_opt(inst)
    payload = {
        "opt_cost": res.opt_cost,
        "subsets_examined": res.subsets_examined,
        "solution": {"open": sorted(res.opt_solution.open),
                     "assign": list(res.opt_solution.assign)},
    }
    with open(args.out, "w") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")
    print(f"opt={res.opt_cost:.6g} subsets={res.subsets_examined}")
    return EXIT_OK


def cmd_verify(args) -> int:
    inst = load_instance(getattr(args, "in"))
    try:
        with open(args.solution) as fh:
            payload = json.load(fh)
        sol = IntegralSolution(open=payload["open"], assign=payload["assign"])
    except (OSError, json.JSONDecodeError, KeyError, TypeError) as exc:
        raise ParseError(f"{args.solution}: {exc}") from exc
    ok, total, violations = oracle.verify(inst, sol)
    print(json.dumps({"feasible": ok, "cost": total, "violations": violations}))
    return EXIT_OK if ok else EXIT_INFEASIBLE


def _bench_one(task):
    seed, alg, alpha, tol, nf, nd, crosscheck = task
    inst = gen_euclidean(nf, nd, seed=seed, cap_range=(1, 4),
                         cardinality=(alg == "cflcfc"))
    report = _run_report(inst, f"seed:{seed}", alg, alpha, tol, seed=seed,
                         crosscheck=crosscheck)
    ok = all(report["invariants"].values())
    return {
        "seed": seed, "alg": alg, "alpha": f"{alpha:.12g}", "nf": nf, "nd": nd,
        "cost": f"{report['cost']:.12g}",
        "lp_bound": f"{report['lower_bound']:.12g}",
        "opt": "" if report["opt_cost"] is None else f"{report['opt_cost']:.12g}",
        "ratio_lp": f"{report['ratio']:.12g}",
        "ratio_opt": "" if report["ratio_vs_opt"] is None
                     else f"{report['ratio_vs_opt']:.12g}",
        "cuts": report["cuts"], "iters": report["iterations"],
        "ms": f"{report['wall_ms']:.3f}", "invariants_ok": int(ok),
    }


def cmd_bench(args) -> int:
    seeds = _parse_seeds(args.seeds)
    tasks = [(s, args.alg, args.alpha, args.tol, args.facilities, args.clients,
              args.exact_crosscheck) for s in seeds]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            rows = list(pool.map(_bench_one, tasks))
    else:
        rows = [_bench_one(t) for t in tasks]
    rows.sort(key=lambda r: r["seed"])
    with open(args.out, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=BENCH_COLUMNS)
        writer.writeheader()
        writer.writerows(rows)
    bad = [r["seed"] for r in rows if not r["invariants_ok"]]
    print(f"wrote {args.out}: {len(rows)} rows" +
          (f", invariant failures on seeds {bad}" if bad else ""))
    return EXIT_INVARIANT if bad else EXIT_OK


def build_parser() -> _Parser:
    p = _Parser(prog="capfloc",
                description="capacitated facility location: approximate solvers, "
                            "exact oracle, and benchmark harness")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a random Euclidean instance")
    g.add_argument("--facilities", type=int, required=True)
    g.add_argument("--clients", type=int, required=True)
    g.add_argument("--seed", type=int, required=True)
    g.add_argument("--cost-range", type=float, nargs=2, default=[0.1, 1.2])
    g.add_argument("--cap-range", type=float, nargs=2, default=[1, 4])
    g.add_argument("--cardinality", action="store_true",
                   help="unit opening costs")
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen)

    s = sub.add_parser("solve", help="run an approximation algorithm")
    s.add_argument("--in", required=True)
    s.add_argument("--alg", choices=["cfl", "cflcfc"], required=True)
    s.add_argument("--alpha", type=float, default=cfl.ALPHA_STAR)
    s.add_argument("--tol", type=float, default=1e-7)
    s.add_argument("--exact-crosscheck", action="store_true",
                   help="also run the exact oracle (guarded at 12 facilities)")
    s.add_argument("--out", required=True)
    s.add_argument("--solution-out", default=None,
                   help="also write the bare solution JSON (verify reads it)")
    s.set_defaults(func=cmd_solve)

    e = sub.add_parser("exact", help="brute-force exact optimum")
    e.add_argument("--in", required=True)
    e.add_argument("--out", required=True)
    e.set_defaults(func=cmd_exact)

    v = sub.add_parser("verify", help="check a solution file against an instance")
    v.add_argument("--in", required=True)
    v.add_argument("--solution", required=True)
    v.set_defaults(func=cmd_verify)

    b = sub.add_parser("bench", help="seed sweep writing one CSV row per run")
    b.add_argument("--alg", choices=["cfl", "cflcfc"], required=True)
    b.add_argument("--seeds", required=True, help="e.g. 1..20 or 3,5,8")
    b.add_argument("--facilities", type=int, required=True)
    b.add_argument("--clients", type=int, required=True)
    b.add_argument("--alpha", type=float, default=cfl.ALPHA_STAR)
    b.add_argument("--tol", type=float, default=1e-7)
    b.add_argument("--jobs", type=int, default=1)
    b.add_argument("--exact-crosscheck", action="store_true")
    b.add_argument("--out", required=True)
    b.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except (ContractError, ParseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except InfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (InvariantViolation, SolverFailure) as exc:
        print(f"failure: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except CapflocError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
