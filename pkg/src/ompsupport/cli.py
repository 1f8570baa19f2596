"""Command-line front end.

Exit codes: 0 success, 1 input error (including bad flags), 2 enumeration
capacity exceeded, 3 inequality violations found with diagnostics enabled.
"""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

from .conditions import CONDITION_IDS, calibrate_c, classify_instance
from .errors import CapacityError, OmpSupportError
from .harness import ExperimentConfig, read_trials_csv, run_experiment
from .linalg import read_matrix, read_vector
from .metrics import DEFAULT_CAP, SparseSignal, compute_kappa, compute_mar, compute_snr, exact_rip_constant
from .omp import CorrelationNorm, FixedIterations, ResidualNorm, omp_run
from .synth import appendix_a_instance, write_instance

EXIT_OK, EXIT_INPUT, EXIT_CAPACITY, EXIT_VIOLATIONS = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_INPUT)


def _num(x: float) -> str:
    return "inf" if math.isinf(x) else format(x, ".12g")


def cmd_run(args) -> int:
    phi = read_matrix(args.matrix)
    y = read_vector(args.vector)
    if args.k is not None:
        rule = FixedIterations(args.k)
    elif args.residual_eps is not None:
        rule = ResidualNorm(args.residual_eps)
    elif args.correlation_eps is not None:
        rule = CorrelationNorm(args.correlation_eps)
    else:
        raise OmpSupportError("one of --k, --residual-eps, --correlation-eps is required")
    trace = omp_run(phi, y, rule)
    if args.json:
        print(trace.to_json())
    else:
        print("# k index max_correlation residual_norm tie")
        sys.stdout.write(trace.to_text())
        print("support=" + ",".join(str(i) for i in trace.final_support))
        print(f"stop={trace.stop_reason}")
    return EXIT_OK


def cmd_rip(args) -> int:
    est = exact_rip_constant(read_matrix(args.matrix), args.order, args.cap, args.workers)
    print(f"delta={_num(est.delta)}")
    print("witness=" + ",".join(str(i) for i in est.witness))
    print(f"subsets={est.subsets_examined}")
    return EXIT_OK


def _load_instance(args):
    d = Path(args.dir) if args.dir else None
    phi = read_matrix(args.matrix or d / "phi.txt")
    x = SparseSignal.from_dense(read_vector(args.x or d / "x.txt"))
    v = read_vector(args.v or d / "v.txt")
    return phi, x, v


def cmd_check(args) -> int:
    if not args.dir and not (args.matrix and args.x and args.v):
        raise OmpSupportError("give --dir or all of --matrix, --x, --v")
    phi, x, v = _load_instance(args)
    k, n = x.sparsity, phi.shape[1]
    deltas = {}
    for order in sorted({k, k + 1}):
        if order <= n:
            deltas[order] = exact_rip_constant(phi, order, args.cap).delta
    if 2 * k <= n and math.comb(n, 2 * k) <= args.cap:
        deltas[2 * k] = exact_rip_constant(phi, 2 * k, args.cap).delta
    print(f"SNR={_num(compute_snr(phi, x, v))}")
    print(f"MAR={_num(compute_mar(x))}")
    print(f"KAPPA={_num(compute_kappa(x))}")
    print(f"K={k}")
    for order in sorted(deltas):
        print(f"delta_{order}={_num(deltas[order])}")
    cls = classify_instance(phi, x, v, deltas)
    for cid in CONDITION_IDS:
        vd = cls.get(cid)
        if vd is None:
            continue
        status = ("pass" if vd.holds else "fail") if vd.applicable else "n/a"
        print(f"{cid}={status} threshold={_num(vd.threshold)} actual={_num(vd.actual)}")
    print(f"region={cls.region}")
    return EXIT_OK


def cmd_counterexample(args) -> int:
    inst = appendix_a_instance(args.k, args.m, args.eps)
    files = write_instance(args.out_dir, inst, {"kind": "counterexample", "K": args.k, "m": args.m,
                                                "eps": repr(args.eps)})
    for name, path in files.items():
        print(f"{name}={path}")
    return EXIT_OK


def _config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.from_file(args.config)
    return cfg.with_overrides(seed=args.seed, trials=args.trials, cap=args.cap,
                              workers=args.workers, out_dir=args.out_dir,
                              diagnostics=True if args.diagnostics else None)


def cmd_experiment(args) -> int:
    result = run_experiment(_config(args))
    for s in result.cells:
        rate = "" if s.exact_recovery_rate is None else _num(s.exact_recovery_rate)
        print(f"{s.cell.key} exact_recovery_rate={rate} errors={s.errors} "
              f"thm1_exceptions={s.thm1_exceptions} violations={s.violations}")
    for name, path in result.paths.items():
        print(f"{name}={path}")
    print(f"violations={result.violations}")
    if result.config.diagnostics and result.violations:
        return EXIT_VIOLATIONS
    return EXIT_OK


def cmd_calibrate(args) -> int:
    if args.config:
        cfg = _config(args)
        records = run_experiment(cfg).records
        rows = [(r.rho_error, r.kappa, r.delta_2k) for r in records
                if not r.error and r.delta_2k is not None and r.delta_2k < 1]
    else:
        rows = []
        for path in args.csv:
            for rec in read_trials_csv(path):
                if rec["error"] or not rec["delta_2K"]:
                    continue
                d = float(rec["delta_2K"])
                if d < 1:
                    rows.append((float(rec["rho_error"]), float(rec["kappa"]), d))
    res = calibrate_c(rows)
    print(f"C*={_num(res.c_star)}")
    print(f"trials={res.trials}")
    print(f"zero_delta_trials={res.zero_delta_trials}")
    print(f"finite={str(res.finite).lower()}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="ompsupport", description="OMP support recovery toolkit")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    r = sub.add_parser("run", help="run OMP on matrix and measurement files, print the trace")
    r.add_argument("--matrix", required=True)
    r.add_argument("--vector", required=True)
    g = r.add_mutually_exclusive_group()
    g.add_argument("--k", type=int)
    g.add_argument("--residual-eps", type=float)
    g.add_argument("--correlation-eps", type=float)
    r.add_argument("--json", action="store_true")
    r.set_defaults(func=cmd_run)

    r = sub.add_parser("rip", help="exact isometry constant of a matrix file")
    r.add_argument("--matrix", required=True)
    r.add_argument("--order", type=int, required=True)
    r.add_argument("--cap", type=int, default=DEFAULT_CAP)
    r.add_argument("--workers", type=int, default=1)
    r.set_defaults(func=cmd_rip)

    r = sub.add_parser("check", help="condition verdicts for an instance")
    r.add_argument("--dir", help="directory holding phi.txt, x.txt, v.txt")
    r.add_argument("--matrix")
    r.add_argument("--x")
    r.add_argument("--v")
    r.add_argument("--cap", type=int, default=DEFAULT_CAP)
    r.set_defaults(func=cmd_check)

    r = sub.add_parser("counterexample", help="write the identity-matrix failure instance")
    r.add_argument("--k", type=int, required=True)
    r.add_argument("--m", type=int, required=True)
    r.add_argument("--eps", type=float, default=0.0)
    r.add_argument("--out-dir", required=True)
    r.set_defaults(func=cmd_counterexample)

    for name, func, hlp in (("experiment", cmd_experiment, "run a config file"),
                            ("calibrate-c", cmd_calibrate, "empirical approximate-recovery constant")):
        r = sub.add_parser(name, help=hlp)
        if name == "experiment":
            r.add_argument("--config", required=True)
        else:
            src = r.add_mutually_exclusive_group(required=True)
            src.add_argument("--config")
            src.add_argument("--csv", nargs="+")
        r.add_argument("--seed", type=int)
        r.add_argument("--trials", type=int)
        r.add_argument("--cap", type=int)
        r.add_argument("--workers", type=int)
        r.add_argument("--diagnostics", action="store_true")
        r.add_argument("--out-dir")
        r.set_defaults(func=func)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else EXIT_INPUT
    try:
        return args.func(args)
    except CapacityError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CAPACITY
    except (OmpSupportError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
