"""``adasgo`` command line: solve, sweep, stopping-study, quad-selftest."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .errors import AdasgoError
from .experiments import ExperimentSpec, protocol_for, results_csv, run_experiment, run_single, stopping_study, write_study
from .methods import METHOD_IDS
from .problems import get_problem
from .rules1d import RuleFamily, make_rule, max_level, polynomial_exactness_degree
from .sg_quadrature import downset_quadrature, product_rule
from .grid_index import full_box

SCHEMES = ("quad-then-diff", "diff-then-quad")


def _sweep_values(args) -> list[float]:
    kind = args.method.partition("_")[0]
    if kind in ("mc", "dtom"):
        vals = args.samples
    elif kind == "dasg":
        vals = args.eps
    else:
        vals = args.level
    if not vals:
        flag = {"mc": "--samples", "dtom": "--samples", "dasg": "--eps"}.get(kind, "--level")
        raise SystemExit(f"error: method {args.method} needs {flag}")
    return [float(v) for v in vals]


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--problem", default="toy", help="toy, additive, additive:<d>, control, control-sym or a JSON path")
    p.add_argument("--method", default="dasg_gp", choices=METHOD_IDS)
    p.add_argument("--eps", type=float, nargs="+", help="adaptive tolerance(s)")
    p.add_argument("--samples", type=int, nargs="+", help="Monte Carlo sample count(s)")
    p.add_argument("--level", type=int, nargs="+", help="sparse-grid or product level(s)")
    p.add_argument("--level-cap", type=int, default=8, help="per-dimension level cap for adaptive runs")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--scheme", choices=SCHEMES)
    p.add_argument("--stencil", choices=("forward", "central"))
    p.add_argument("--max-iters", type=int)
    p.add_argument("--out", help="output directory")


def cmd_solve(args) -> int:
    problem = get_problem(args.problem)
    param = _sweep_values(args)[0]
    proto = protocol_for(problem, args.scheme, args.stencil, args.max_iters)
    u, trace = run_single(problem, args.method, param, args.seed, 0, proto, args.level_cap)
    summary = {
        "problem": problem.name,
        "method": args.method,
        "param": param,
        "u": u.tolist(),
        "iterations": trace.iterations,
        "message": trace.message,
        "avg_points": trace.average_points(proto.role) or trace.average_points(),
    }
    if problem.u_star is not None:
        summary["u_error"] = float(np.linalg.norm(u - problem.u_star))
    if trace.final.objective is not None and problem.f_star is not None:
        summary["f_error"] = abs(trace.final.objective - problem.f_star)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        trace.to_jsonl(out / "trace.jsonl")
        trace.to_csv(out / "trace.csv")
        (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    print(json.dumps(summary, indent=2))
    return 0


def cmd_sweep(args) -> int:
    spec = ExperimentSpec(args.problem, args.method, _sweep_values(args), args.seed, args.out,
                          args.repetitions, args.level_cap, args.scheme, args.stencil, args.max_iters)
    rows = run_experiment(spec)
    sys.stdout.write(results_csv(rows))
    return 0


def cmd_stopping(args) -> int:
    eps = args.eps or [1.0, 0.1]
    entries = stopping_study(args.problem, eps, args.families, args.probe_eps, args.max_iters or 8, args.level_cap)
    for e in entries:
        fit = "none" if e.fit is None else f"a={e.fit.a:.4g} b={e.fit.b:.4g} c={e.fit.c:.4g} rms={e.fit.residual:.3g}"
        print(f"eps={e.epsilon:g} {e.family}: Stop(at_iteration={e.stop_index}) true argmin={e.true_argmin} "
              f"monitor_fired={e.monitor_fired} halted='{e.halted}' fit: {fit}")
    if args.out:
        write_study(entries, args.out)
    return 0


def _selftest_1d() -> list[tuple[str, bool]]:
    out = []
    for fam in RuleFamily:
        for lev in range(1, min(max_level(fam), 6) + 1):
            rule = make_rule(fam, lev)
            deg = polynomial_exactness_degree(fam, lev)
            worst = max(abs(rule.apply(lambda x, k=k: x**k) - (0.0 if k % 2 else 2.0 / (k + 1)))
                        for k in range(deg + 1))
            out.append((f"1d {fam.value} level {lev} degree {deg}", worst <= 1e-12))
    return out


def _selftest_box(seed: int) -> list[tuple[str, bool]]:
    rng = np.random.default_rng(seed)
    out = []
    for fam in RuleFamily:
        for cap in [(3,), (3, 2), (2, 3, 2)]:
            a = rng.uniform(-1, 1, len(cap))

            def f(x, a=a):
                return np.exp(x @ a)

            q1 = downset_quadrature(fam, full_box(cap), f).value
            q2 = product_rule(fam, cap, f).value
            out.append((f"box {fam.value} cap {cap}", abs(q1 - q2) <= 1e-12 * max(1.0, abs(q2))))
    return out


def cmd_selftest(args) -> int:
    checks = _selftest_1d() + _selftest_box(args.seed)
    for name, ok in checks:
        print(f"{'PASS' if ok else 'FAIL'} {name}")
    failed = sum(not ok for _, ok in checks)
    print(f"{len(checks) - failed}/{len(checks)} checks passed")
    return 1 if failed else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="adasgo", description=__doc__)
    sub = parser.add_subparsers(dest="verb", required=True)
    p = sub.add_parser("solve", help="run one optimisation and print a summary")
    _common(p)
    p.set_defaults(func=cmd_solve)
    p = sub.add_parser("sweep", help="run a method over a parameter sweep and emit results.csv")
    _common(p)
    p.add_argument("--repetitions", type=int, default=10, help="repetitions averaged for Monte Carlo rows")
    p.set_defaults(func=cmd_sweep)
    p = sub.add_parser("stopping-study", help="trend-monitor study over epsilons and rule families")
    _common(p)
    p.add_argument("--families", nargs="+", default=["tra", "cc", "gp"])
    p.add_argument("--probe-eps", type=float, help="probe tolerance (default eps/4)")
    p.set_defaults(func=cmd_stopping)
    p = sub.add_parser("quad-selftest", help="1D exactness and sparse-grid versus product checks")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_selftest)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except AdasgoError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
