"""Command-line interface.

Subcommands: gen-kernel, solve, bench, sweep, variance, verify.  Exit codes:
0 on success, 1 for usage or file-format problems, 2 for numerical failures
(non-positive-definite input, CG breakdown, failed verification).

``--threads`` is applied to the BLAS thread-count environment variables
before numpy is imported, so the heavy imports happen inside the handlers.
"""

import argparse
import json
import os
import sys
import time

_THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")


def _apply_thread_flag(argv):
    for i, arg in enumerate(argv):
        if arg == "--threads" and i + 1 < len(argv):
            value = argv[i + 1]
        elif arg.startswith("--threads="):
            value = arg.split("=", 1)[1]
        else:
            continue
        if value.isdigit() and int(value) > 0:
            for var in _THREAD_VARS:
                os.environ[var] = value
        return


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on usage errors; this package reserves 2 for numerics."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _env_seed():
    raw = os.environ.get("DPPMAP_SEED", "0")
    try:
        return int(raw)
    except ValueError:
        raise SystemExit(f"dppmap: error: DPPMAP_SEED must be an integer, got {raw!r}")


def _int_list(text):
    try:
        return tuple(int(v) for v in text.split(",") if v != "")
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _add_solver_flags(sub):
    sub.add_argument("--p", type=int, default=5, help="number of partition groups")
    sub.add_argument("--k", type=int, default=10, help="batch size")
    sub.add_argument("--s", type=int, default=50, help="batches sampled per iteration")
    sub.add_argument("--m", type=int, default=20, help="probe vectors per estimate")
    sub.add_argument("--n", type=int, default=15, help="polynomial degree of the log expansion")
    sub.add_argument("--ell", type=int, default=20, help="estimates re-scored exactly per pool")
    sub.add_argument("--budget", type=int, default=None, help="maximum selection size")
    sub.add_argument("--tol", type=float, default=1e-10, help="CG residual tolerance")
    sub.add_argument("--max-cg-iter", type=int, default=30, help="CG iteration cap")


def _add_kernel_flags(sub, seed):
    sub.add_argument("--dim", type=int, default=None, help="synthetic kernel dimension")
    sub.add_argument("--seed", type=int, default=seed,
                     help="RNG seed (env DPPMAP_SEED overrides the default)")
    sub.add_argument("--beta1", type=float, default=0.01, help="quality log-slope")
    sub.add_argument("--beta2", type=float, default=0.2, help="quality log-offset")
    sub.add_argument("--shift", type=float, default=None,
                     help="diagonal shift (default 1.01 for gen-kernel/solve, 0 for bench/sweep)")


def build_parser():
    seed = _env_seed()
    parser = _Parser(prog="dppmap",
                     description="Greedy MAP inference for determinantal point processes.")
    parser.add_argument("--threads", type=int, default=None,
                        help="BLAS thread count (applied before numpy loads)")
    commands = parser.add_subparsers(dest="command", required=True)

    gen = commands.add_parser("gen-kernel", parents=[], help="write a synthetic kernel file")
    _add_kernel_flags(gen, seed)
    gen.add_argument("--out", required=True, help="output kernel path")
    gen.add_argument("--threads", type=int, default=None, help=argparse.SUPPRESS)

    solve = commands.add_parser("solve", help="run one solver on a kernel")
    _add_kernel_flags(solve, seed)
    solve.add_argument("--kernel", default=None, help="kernel file (binary or CSV)")
    solve.add_argument("--algo", default="lazy",
                       choices=["exact", "lazy", "alg1", "alg2", "brute"])
    _add_solver_flags(solve)
    solve.add_argument("--json", default=None, help="write the full result as JSON")
    solve.add_argument("--threads", type=int, default=None, help=argparse.SUPPRESS)

    bench = commands.add_parser("bench", help="timed comparison against the lazy baseline")
    bench.add_argument("--dim", type=_int_list, default=(1000,),
                       help="comma-separated kernel dimensions")
    bench.add_argument("--seed", type=_int_list, default=(seed,),
                       help="comma-separated seeds")
    bench.add_argument("--algo", default="lazy,alg1,alg2",
                       help="comma-separated algorithms")
    bench.add_argument("--beta1", type=float, default=0.01)
    bench.add_argument("--beta2", type=float, default=0.2)
    bench.add_argument("--shift", type=float, default=0.0)
    _add_solver_flags(bench)
    bench.add_argument("--repeats", type=int, default=1, help="timing repetitions (median)")
    bench.add_argument("--out", default=None, help="CSV output path")
    bench.add_argument("--json", default=None, help="JSON output path")
    bench.add_argument("--threads", type=int, default=None, help=argparse.SUPPRESS)

    sweep = commands.add_parser("sweep", help="vary one solver parameter with paired seeds")
    sweep.add_argument("parameter", choices=["p", "k"])
    sweep.add_argument("values", type=_int_list, help="comma-separated values")
    sweep.add_argument("--dim", type=_int_list, default=(500,))
    sweep.add_argument("--seed", type=_int_list, default=(seed,))
    sweep.add_argument("--beta1", type=float, default=0.01)
    sweep.add_argument("--beta2", type=float, default=0.2)
    sweep.add_argument("--shift", type=float, default=0.0)
    _add_solver_flags(sweep)
    sweep.add_argument("--repeats", type=int, default=1)
    sweep.add_argument("--out", default=None, help="CSV output path")
    sweep.add_argument("--json", default=None, help="JSON output path")
    sweep.add_argument("--threads", type=int, default=None, help=argparse.SUPPRESS)

    var = commands.add_parser("variance",
                              help="shared vs independent probe variance study")
    var.add_argument("trials", type=int, nargs="?", default=100)
    var.add_argument("--dim", type=int, default=40, help="matrix dimension per pair")
    var.add_argument("--seed", type=int, default=seed)
    var.add_argument("--m", type=int, default=20, help="probe vectors per estimate")
    var.add_argument("--n", type=int, default=15, help="polynomial degree")
    var.add_argument("--repeats", type=int, default=200, help="draws per matrix pair")
    var.add_argument("--out", default=None, help="CSV output path")
    var.add_argument("--threads", type=int, default=None, help=argparse.SUPPRESS)

    verify = commands.add_parser("verify", help="recheck a saved solve result")
    verify.add_argument("result", help="JSON file produced by solve --json")
    verify.add_argument("--kernel", default=None,
                        help="kernel file (default: what the result records)")
    verify.add_argument("--threads", type=int, default=None, help=argparse.SUPPRESS)

    return parser


def _load_any_kernel(path):
    from .kernel import load_kernel, load_kernel_text

    with open(path, "rb") as fh:
        head = fh.read(4)
    if head == b"DPPK":
        return load_kernel(path)
    return load_kernel_text(path)


def _resolve_kernel(args, default_shift=1.01):
    """Kernel matrix plus a provenance dict for result files."""
    from .kernel import SyntheticConfig, generate_synthetic_kernel

    kernel_path = getattr(args, "kernel", None)
    if kernel_path:
        return _load_any_kernel(kernel_path), {"kernel_file": kernel_path}
    if args.dim is None:
        raise SystemExit("dppmap: error: provide --kernel or --dim")
    shift = args.shift if args.shift is not None else default_shift
    cfg = SyntheticConfig(dim=args.dim, seed=args.seed, quality_slope=args.beta1,
                          quality_offset=args.beta2, monotone_shift=shift)
    provenance = {"synthetic": {"dim": cfg.dim, "seed": cfg.seed,
                                "beta1": cfg.quality_slope, "beta2": cfg.quality_offset,
                                "shift": cfg.monotone_shift}}
    return generate_synthetic_kernel(cfg), provenance


def _echo(label, mapping):
    pairs = " ".join(f"{k}={v}" for k, v in mapping.items())
    print(f"# {label}: {pairs}")


def _cmd_gen_kernel(args):
    from .kernel import SyntheticConfig, generate_synthetic_kernel, save_kernel

    if args.dim is None:
        raise SystemExit("dppmap: error: gen-kernel requires --dim")
    shift = args.shift if args.shift is not None else 1.01
    cfg = SyntheticConfig(dim=args.dim, seed=args.seed, quality_slope=args.beta1,
                          quality_offset=args.beta2, monotone_shift=shift)
    _echo("gen-kernel", {"dim": cfg.dim, "seed": cfg.seed, "beta1": cfg.quality_slope,
                         "beta2": cfg.quality_offset, "shift": cfg.monotone_shift,
                         "out": args.out})
    save_kernel(args.out, generate_synthetic_kernel(cfg))
    print(f"wrote {args.out} (dim={cfg.dim})")
    return 0


def _cmd_solve(args):
    from .bench import ExperimentConfig, solve_with
    from .kernel import spectral_bounds, validate_kernel

    L, provenance = _resolve_kernel(args)
    validate_kernel(L)
    config = ExperimentConfig(
        dims=(L.shape[0],), seeds=(args.seed,), algorithms=(args.algo,),
        budget=args.budget, p=args.p, k=args.k, s=args.s, m=args.m, n=args.n,
        ell=args.ell, tol=args.tol, max_iter=args.max_cg_iter,
    )
    _echo("solve", {"algo": args.algo, "d": L.shape[0], "seed": args.seed,
                    "budget": args.budget, "p": args.p, "k": args.k, "s": args.s,
                    "m": args.m, "n": args.n, "ell": args.ell, "tol": args.tol,
                    "max_cg_iter": args.max_cg_iter, **_flat(provenance)})
    bounds = spectral_bounds(L) if args.algo == "alg2" else None
    start = time.perf_counter()
    result = solve_with(args.algo, L, config, bounds=bounds, seed=args.seed)
    ms = (time.perf_counter() - start) * 1000.0
    print(f"selected {result.size} items, log det {result.log_det:.6f}, "
          f"stop={result.stop_reason}, {ms:.1f} ms, "
          f"exact_evals={result.exact_evals}, cg_iters={result.cg_iters}")
    if args.json:
        payload = {
            "command": "solve",
            "algorithm": result.algorithm,
            "kernel": provenance,
            "params": {"seed": args.seed, "budget": args.budget, "p": args.p,
                       "k": args.k, "s": args.s, "m": args.m, "n": args.n,
                       "ell": args.ell, "tol": args.tol,
                       "max_cg_iter": args.max_cg_iter},
            "selected": result.selected,
            "gains": result.gains,
            "log_det": result.log_det,
            "stop_reason": result.stop_reason,
            "exact_evals": result.exact_evals,
            "cg_iters": result.cg_iters,
            "cg_solves": result.cg_solves,
            "cg_converged": result.cg_converged,
            "ms": ms,
        }
        with open(args.json, "w") as fh:
            json.dump(payload, fh, indent=2)
            fh.write("\n")
        print(f"wrote {args.json}")
    return 0


def _flat(provenance):
    if "kernel_file" in provenance:
        return {"kernel": provenance["kernel_file"]}
    return provenance.get("synthetic", {})


def _progress_printer(row):
    if row.error:
        print(f"{row.algo:>5} d={row.d} seed={row.seed} FAILED: {row.error}")
        return
    print(f"{row.algo:>5} d={row.d} seed={row.seed} |X|={row.set_size} "
          f"logdet={row.logdet:.4f} ratio={row.ratio:.4f} "
          f"ms={row.ms:.1f} speedup={row.speedup:.2f}")


def _bench_config(args, algorithms):
    from .bench import ExperimentConfig

    return ExperimentConfig(
        dims=tuple(args.dim), seeds=tuple(args.seed), algorithms=algorithms,
        budget=args.budget, p=args.p, k=args.k, s=args.s, m=args.m, n=args.n,
        ell=args.ell, tol=args.tol, max_iter=args.max_cg_iter,
        quality_slope=args.beta1, quality_offset=args.beta2,
        monotone_shift=args.shift, repetitions=args.repeats,
    )


def _cmd_bench(args):
    from .bench import run_comparison, write_rows_csv, write_rows_json

    algorithms = tuple(a for a in args.algo.split(",") if a)
    config = _bench_config(args, algorithms)
    _echo("bench", {"dims": list(config.dims), "seeds": list(config.seeds),
                    "algos": list(algorithms), "budget": config.budget,
                    "p": config.p, "k": config.k, "s": config.s, "m": config.m,
                    "n": config.n, "ell": config.ell, "shift": config.monotone_shift,
                    "repeats": config.repetitions})
    rows = run_comparison(config, progress=_progress_printer)
    if args.out:
        write_rows_csv(rows, args.out)
        print(f"wrote {args.out}")
    if args.json:
        write_rows_json(rows, config, args.json)
        print(f"wrote {args.json}")
    return 1 if any(row.error for row in rows) else 0


def _cmd_sweep(args):
    from .bench import parameter_sweep, write_rows_csv, write_rows_json

    algo = "alg1" if args.parameter == "p" else "alg2"
    config = _bench_config(args, (algo,))
    _echo("sweep", {"parameter": args.parameter, "values": list(args.values),
                    "dims": list(config.dims), "seeds": list(config.seeds),
                    "shift": config.monotone_shift})
    rows = parameter_sweep(config, args.parameter, list(args.values),
                           progress=_progress_printer)
    if args.out:
        write_rows_csv(rows, args.out)
        print(f"wrote {args.out}")
    if args.json:
        write_rows_json(rows, config, args.json)
        print(f"wrote {args.json}")
    return 1 if any(row.error for row in rows) else 0


def _cmd_variance(args):
    from .bench import variance_study, write_variance_csv

    _echo("variance", {"trials": args.trials, "dim": args.dim, "seed": args.seed,
                       "probes": args.m, "degree": args.n, "draws": args.repeats})
    reports = variance_study(trials=args.trials, dim=args.dim, draws=args.repeats,
                             probe_count=args.m, degree=args.n, seed=args.seed)
    within = sum(r.var_shared <= r.bound for r in reports)
    smaller = sum(r.var_shared < r.var_indep for r in reports)
    print(f"{within}/{len(reports)} trials within the analytic bound; "
          f"shared variance smaller in {smaller}/{len(reports)}")
    if args.out:
        write_variance_csv(reports, args.out)
        print(f"wrote {args.out}")
    return 0


def _cmd_verify(args):
    import numpy as np

    from .kernel import SyntheticConfig, generate_synthetic_kernel
    from .linalg import cholesky_logdet

    with open(args.result) as fh:
        payload = json.load(fh)
    selected = payload.get("selected")
    stored = payload.get("log_det")
    if selected is None or stored is None:
        print("result file lacks 'selected'/'log_det'", file=sys.stderr)
        return 1
    if args.kernel:
        L = _load_any_kernel(args.kernel)
    else:
        info = payload.get("kernel", {})
        if "kernel_file" in info:
            L = _load_any_kernel(info["kernel_file"])
        elif "synthetic" in info:
            syn = info["synthetic"]
            L = generate_synthetic_kernel(SyntheticConfig(
                dim=syn["dim"], seed=syn["seed"], quality_slope=syn["beta1"],
                quality_offset=syn["beta2"], monotone_shift=syn["shift"]))
        else:
            print("no kernel recorded in result; pass --kernel", file=sys.stderr)
            return 1
    idx = np.asarray(selected, dtype=int)
    recomputed, _ = cholesky_logdet(L[np.ix_(idx, idx)])
    diff = abs(recomputed - stored)
    tol = 1e-6 * max(1.0, abs(stored))
    if diff > tol:
        print(f"MISMATCH: stored log det {stored:.9f}, recomputed {recomputed:.9f} "
              f"(|diff| {diff:.3e} > {tol:.3e})", file=sys.stderr)
        return 2
    print(f"verified: {len(selected)} items, log det {recomputed:.6f} "
          f"(|diff| {diff:.3e})")
    return 0


_HANDLERS = {
    "gen-kernel": _cmd_gen_kernel,
    "solve": _cmd_solve,
    "bench": _cmd_bench,
    "sweep": _cmd_sweep,
    "variance": _cmd_variance,
    "verify": _cmd_verify,
}


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    _apply_thread_flag(argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _HANDLERS[args.command](args)
    except SystemExit:
        raise
    except OSError as exc:
        print(f"dppmap: error: {exc}", file=sys.stderr)
        return 1
    except json.JSONDecodeError as exc:
        print(f"dppmap: error: invalid JSON in input file: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:  # includes KernelFormatError
        print(f"dppmap: error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:
        import numpy as np

        if isinstance(exc, np.linalg.LinAlgError):
            print(f"dppmap: numerical failure: {exc}", file=sys.stderr)
            return 2
        raise


if __name__ == "__main__":
    sys.exit(main())
