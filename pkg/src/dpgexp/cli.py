"""Command-line front end.

Subcommands::

    dpgexp solve    --problem ho --method dpg3 --steps 32 --out traj.csv
    dpgexp converge --problem ho --method dpg3 --steps 4..128 --reference self
    dpgexp check-order-conditions
    dpgexp check-phi

Exit status: 0 on success, 1 on usage errors, 2 on numerical failure.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from .harness import (RunConfig, check_order_conditions, emit_outputs, parse_config,
                      parse_steps, run_convergence, write_trajectory_csv)
from .integrators import MethodId, TimeGrid, integrate
from .phi import (Backend, KrylovConvergenceError, PhiEvaluator, krylov_phi_action,
                  phi_dense)
from .operators import DenseOperator
from .problems import PROBLEMS

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_run_options(p):
    p.add_argument("--config", help="file of key = value lines; flags override it")
    p.add_argument("--problem", help=f"one of: {', '.join(sorted(PROBLEMS))}")
    p.add_argument("--method", help=f"one of: {', '.join(m.value for m in MethodId)}")
    p.add_argument("--grid", type=int, help="interior points per dimension (ho)")
    p.add_argument("--t0", type=float)
    p.add_argument("--T", type=float)
    p.add_argument("--steps", help="comma list or a..b doubling range")
    p.add_argument("--tol", type=float)
    p.add_argument("--backend", choices=[b.value for b in Backend])
    p.add_argument("--max-krylov-dim", type=int)
    p.add_argument("--dense-threshold", type=int)
    p.add_argument("--reference", choices=["exact", "self"])
    p.add_argument("--out")
    p.add_argument("--plot-out")


def build_parser():
    parser = _Parser(prog="dpgexp", description="Exponential DPG integrators and convergence studies")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    solve = sub.add_parser("solve", help="integrate one trajectory and write it as CSV")
    _add_run_options(solve)
    solve.add_argument("--fields-out", help="also write interval constants to this CSV")
    conv = sub.add_parser("converge", help="run a convergence study")
    _add_run_options(conv)
    oc = sub.add_parser("check-order-conditions", help="verify the stiff order conditions")
    oc.add_argument("--samples", type=int, default=20)
    oc.add_argument("--dim", type=int, default=6)
    oc.add_argument("--matrices", type=int, default=5)
    ph = sub.add_parser("check-phi", help="phi-function kernel self-test")
    ph.add_argument("--tol", type=float, default=1e-12)
    return parser


def _config_from(args) -> RunConfig:
    kwargs = {}
    if args.config:
        with open(args.config) as fh:
            kwargs.update(parse_config(fh.read()))
    for key in ("problem", "method", "grid", "t0", "T", "tol", "backend",
                "max_krylov_dim", "dense_threshold", "reference", "out", "plot_out"):
        val = getattr(args, key)
        if val is not None:
            kwargs[key] = val
    if args.steps is not None:
        kwargs["steps"] = parse_steps(args.steps)
    try:
        return RunConfig(**kwargs)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _cmd_solve(args):
    cfg = _config_from(args)
    if len(cfg.steps) != 1:
        raise UsageError("solve takes a single step count")
    inst = cfg.instance()
    traj = integrate(inst.system, TimeGrid(inst.t0, inst.T, cfg.steps[0]), inst.u0,
                     cfg.method, cfg.evaluator())
    out = cfg.out or "trajectory.csv"
    write_trajectory_csv(out, traj.times, traj.traces)
    if args.fields_out and traj.fields is not None:
        mids = 0.5 * (traj.times[:-1] + traj.times[1:])
        write_trajectory_csv(args.fields_out, mids, traj.fields)
    if inst.exact is not None:
        err = np.abs(traj.final - inst.exact(inst.T)).max()
        print(f"final-time max-norm error vs exact: {err:.6e}")
    print(f"wrote {out}")
    return EXIT_OK


def _cmd_converge(args):
    cfg = _config_from(args)
    report = run_convergence(cfg)
    print(report.format())
    if cfg.out:
        plot = cfg.plot_out or cfg.out.rsplit(".", 1)[0] + ".plot.csv"
        emit_outputs(report, cfg.out, plot)
        print(f"wrote {cfg.out} and {plot}")
    return EXIT_OK


def _cmd_order_conditions(args):
    z = np.linspace(-5.0, 5.0, args.samples)
    table = check_order_conditions(z, args.dim, n_matrices=args.matrices)
    worst = 0.0
    print(f"{'condition':<24} {'samples':<8} {'max residual':>14}")
    for (name, kind), res in table.items():
        print(f"{name:<24} {kind:<8} {res:>14.3e}")
        worst = max(worst, res)
    ok = worst <= 1e-12
    print("PASS" if ok else "FAIL", f"(max residual {worst:.3e}, threshold 1e-12)")
    return EXIT_OK if ok else EXIT_NUMERIC


def _cmd_check_phi(args):
    rng = np.random.default_rng(0)
    ok = True
    worst_rec = 0.0
    for _ in range(5):
        M = rng.standard_normal((8, 8))
        M *= 4.0 / max(abs(np.linalg.eigvals(M)))
        phis = [phi_dense(p, M) for p in range(6)]
        Minv = np.linalg.inv(M)
        for p in range(5):
            fact = float(np.prod(range(1, p + 1)))
            res = np.linalg.norm(phis[p + 1] - Minv @ (phis[p] - np.eye(8) / fact)) / np.linalg.norm(phis[p + 1])
            worst_rec = max(worst_rec, res)
    ok &= worst_rec <= 1e-10
    print(f"recurrence residual      {worst_rec:.3e}  (<= 1e-10)")
    worst_zero = 0.0
    for p in range(6):
        fact = float(np.prod(range(1, p + 1)))
        worst_zero = max(worst_zero, np.abs(phi_dense(p, np.zeros((3, 3))) - np.eye(3) / fact).max())
    ok &= worst_zero <= 1e-14
    print(f"phi_p(0) - I/p!          {worst_zero:.3e}  (<= 1e-14)")
    ev = PhiEvaluator(tol=args.tol)
    worst_kr = 0.0
    for _ in range(5):
        A = rng.standard_normal((16, 16))
        v = rng.standard_normal(16)
        for p in range(4):
            ref = phi_dense(p, 0.5 * A) @ v
            got = krylov_phi_action(DenseOperator(A), 0.5, v, p, ev)
            worst_kr = max(worst_kr, np.linalg.norm(got - ref) / np.linalg.norm(ref))
    ok &= worst_kr <= 10 * args.tol
    print(f"krylov vs dense (dim 16) {worst_kr:.3e}  (<= {10 * args.tol:.0e})")
    print("PASS" if ok else "FAIL")
    return EXIT_OK if ok else EXIT_NUMERIC


_COMMANDS = {
    "solve": _cmd_solve,
    "converge": _cmd_converge,
    "check-order-conditions": _cmd_order_conditions,
    "check-phi": _cmd_check_phi,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (UsageError, ValueError, KeyError) as exc:
        print(f"dpgexp: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (KrylovConvergenceError, ArithmeticError, RuntimeError, np.linalg.LinAlgError) as exc:
        print(f"dpgexp: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
