"""Benchmark harness: accuracy/speed comparisons, variance study, sweeps.

``run_comparison`` times each requested solver against the lazy-greedy
baseline on shared synthetic kernels and reports log-det ratios and
speedups.  ``variance_study`` measures the variance reduction from sharing
probe vectors between two log-determinant estimates against the analytic
bound.  ``parameter_sweep`` varies one solver parameter with paired seeds.

Timings cover the solver call only; kernel generation and the spectral
bounds both solvers would share are computed outside the clock.
"""

import csv
import json
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from ._rng import substream
from .greedy import (
    batch_greedy,
    brute_force_map,
    exact_greedy,
    lazy_greedy,
    partitioned_greedy,
)
from .kernel import SyntheticConfig, generate_synthetic_kernel, spectral_bounds
from .logdet import (
    RescaledOperator,
    chebyshev_coefficients,
    estimate_logdet,
    probe_variance_bound,
    rademacher_probes,
)

__all__ = [
    "ExperimentConfig",
    "RunReport",
    "VarianceReport",
    "ALGORITHMS",
    "solve_with",
    "run_comparison",
    "parameter_sweep",
    "variance_study",
    "write_rows_csv",
    "write_rows_json",
    "write_variance_csv",
]

ALGORITHMS = ("exact", "lazy", "alg1", "alg2", "brute")

CSV_COLUMNS = (
    "algo", "seed", "d", "params", "set_size", "logdet",
    "ratio", "ms", "speedup", "cg_iters", "exact_evals",
)


@dataclass
class ExperimentConfig:
    """Everything a comparison run needs; defaults match the solver defaults.

    Benchmark kernels default to no diagonal shift so runs exercise the
    natural stopping rule instead of sweeping to the budget.
    """

    dims: tuple = (1000,)
    seeds: tuple = (0,)
    algorithms: tuple = ("lazy", "alg1", "alg2")
    budget: int = None
    p: int = 5
    k: int = 10
    s: int = 50
    m: int = 20
    n: int = 15
    ell: int = 20
    tol: float = 1e-10
    max_iter: int = 30
    quality_slope: float = 0.01
    quality_offset: float = 0.2
    monotone_shift: float = 0.0
    repetitions: int = 1

    def __post_init__(self):
        if not self.dims:
            raise ValueError("need at least one dimension")
        if not self.seeds:
            raise ValueError("need at least one seed")
        if not self.algorithms:
            raise ValueError("need at least one algorithm")
        for algo in self.algorithms:
            if algo not in ALGORITHMS:
                raise ValueError(f"unknown algorithm {algo!r}; choose from {ALGORITHMS}")
        if self.repetitions < 1:
            raise ValueError("repetitions must be positive")

    def kernel_config(self, dim, seed):
        return SyntheticConfig(
            dim=dim, seed=seed,
            quality_slope=self.quality_slope,
            quality_offset=self.quality_offset,
            monotone_shift=self.monotone_shift,
        )


@dataclass
class RunReport:
    """One solver-on-kernel cell of a comparison table."""

    algo: str
    seed: int
    d: int
    params: str
    set_size: int = 0
    logdet: float = float("nan")
    ratio: float = float("nan")
    ms: float = float("nan")
    speedup: float = float("nan")
    cg_iters: int = 0
    exact_evals: int = 0
    error: str = ""
    selected: list = field(default_factory=list)


@dataclass
class VarianceReport:
    """One matrix pair of the shared-vs-independent probe variance study."""

    trial: int
    frobenius_diff: float
    var_shared: float
    var_indep: float
    bound: float


def solve_with(algo, L, config, bounds=None, seed=0):
    """Dispatch one solver run under an ExperimentConfig."""
    if algo == "exact":
        return exact_greedy(L, config.budget)
    if algo == "lazy":
        return lazy_greedy(L, config.budget)
    if algo == "brute":
        return brute_force_map(L, config.budget if config.budget is not None else L.shape[0])
    if algo == "alg1":
        return partitioned_greedy(
            L, budget=config.budget, p=config.p, ell=config.ell,
            tol=config.tol, max_iter=config.max_iter, seed=seed,
        )
    if algo == "alg2":
        return batch_greedy(
            L, budget=config.budget, p=config.p, k=config.k, s=config.s,
            m=config.m, n=config.n, ell=config.ell, tol=config.tol,
            max_iter=config.max_iter, seed=seed, bounds=bounds,
        )
    raise ValueError(f"unknown algorithm {algo!r}; choose from {ALGORITHMS}")


def _param_string(algo, config):
    if algo == "alg1":
        parts = [f"p={config.p}", f"ell={config.ell}"]
    elif algo == "alg2":
        parts = [f"p={config.p}", f"k={config.k}", f"s={config.s}",
                 f"m={config.m}", f"n={config.n}", f"ell={config.ell}"]
    else:
        parts = []
    if config.budget is not None:
        parts.append(f"budget={config.budget}")
    return ";".join(parts)


def _timed_solve(algo, L, config, bounds, seed):
    """Median wall time over repetitions; the result is deterministic per seed."""
    times = []
    result = None
    for _ in range(config.repetitions):
        start = time.perf_counter()
        result = solve_with(algo, L, config, bounds=bounds, seed=seed)
        times.append((time.perf_counter() - start) * 1000.0)
    return result, float(np.median(times))


def run_comparison(config, progress=None):
    """Run every (dim, seed, algorithm) cell; returns a list of RunReport.

    The lazy baseline runs first on every kernel and anchors ratio and
    speedup (its own row reports 1.0 for both).  A failing cell records its
    error and the run continues.
    """
    rows = []
    for d in config.dims:
        for seed in config.seeds:
            L = generate_synthetic_kernel(config.kernel_config(d, seed))
            needs_bounds = "alg2" in config.algorithms
            bounds = spectral_bounds(L) if needs_bounds else None
            base, base_ms = _timed_solve("lazy", L, config, bounds, seed)
            base_row = RunReport(
                algo="lazy", seed=seed, d=d, params=_param_string("lazy", config),
                set_size=base.size, logdet=base.log_det, ratio=1.0, ms=base_ms,
                speedup=1.0, cg_iters=base.cg_iters, exact_evals=base.exact_evals,
                selected=base.selected,
            )
            rows.append(base_row)
            if progress:
                progress(base_row)
            for algo in config.algorithms:
                if algo == "lazy":
                    continue
                row = RunReport(algo=algo, seed=seed, d=d,
                                params=_param_string(algo, config))
                try:
                    res, ms = _timed_solve(algo, L, config, bounds, seed)
                except Exception as exc:  # keep the table going
                    row.error = f"{type(exc).__name__}: {exc}"
                    rows.append(row)
                    if progress:
                        progress(row)
                    continue
                row.set_size = res.size
                row.logdet = res.log_det
                row.ratio = res.log_det / base.log_det if base.log_det > 0 else float("nan")
                row.ms = ms
                row.speedup = base_ms / ms if ms > 0 else float("nan")
                row.cg_iters = res.cg_iters
                row.exact_evals = res.exact_evals
                row.selected = res.selected
                rows.append(row)
                if progress:
                    progress(row)
    return rows


def parameter_sweep(config, parameter, values, progress=None):
    """Vary one solver parameter over ``values`` with paired seeds.

    Sweeping ``p`` runs the partitioned solver, ``k`` the batch solver; every
    value reuses the same kernels and the same per-seed lazy baseline, so
    rows are directly comparable across values.
    """
    if parameter not in ("p", "k"):
        raise ValueError(f"can only sweep 'p' or 'k', got {parameter!r}")
    algo = "alg1" if parameter == "p" else "alg2"
    rows = []
    for d in config.dims:
        for seed in config.seeds:
            L = generate_synthetic_kernel(config.kernel_config(d, seed))
            bounds = spectral_bounds(L) if algo == "alg2" else None
            base, base_ms = _timed_solve("lazy", L, config, bounds, seed)
            rows.append(RunReport(
                algo="lazy", seed=seed, d=d, params="",
                set_size=base.size, logdet=base.log_det, ratio=1.0, ms=base_ms,
                speedup=1.0, cg_iters=base.cg_iters, exact_evals=base.exact_evals,
                selected=base.selected,
            ))
            if progress:
                progress(rows[-1])
            for value in values:
                cfg = ExperimentConfig(**{**asdict(config), parameter: value})
                row = RunReport(algo=algo, seed=seed, d=d,
                                params=_param_string(algo, cfg))
                try:
                    res, ms = _timed_solve(algo, L, cfg, bounds, seed)
                except Exception as exc:
                    row.error = f"{type(exc).__name__}: {exc}"
                    rows.append(row)
                    if progress:
                        progress(row)
                    continue
                row.set_size = res.size
                row.logdet = res.log_det
                row.ratio = res.log_det / base.log_det if base.log_det > 0 else float("nan")
                row.ms = ms
                row.speedup = base_ms / ms if ms > 0 else float("nan")
                row.cg_iters = res.cg_iters
                row.exact_evals = res.exact_evals
                row.selected = res.selected
                rows.append(row)
                if progress:
                    progress(row)
    return rows


def _banded_pair(dim, delta, closeness, rng):
    """Two nearby symmetric matrices with spectra strictly inside [delta, 1-delta].

    The second is a small symmetric perturbation of the first; its spectrum
    stays in the band because the eigenvalue shift is at most the Frobenius
    norm of the perturbation, which ``closeness`` keeps below the margin.
    """
    margin = (1.0 - 2.0 * delta) * 0.2
    q, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
    eigs = rng.uniform(delta + margin, 1.0 - delta - margin, size=dim)
    a = (q * eigs) @ q.T
    a = (a + a.T) / 2.0
    e = rng.standard_normal((dim, dim))
    e = (e + e.T) / 2.0
    e *= closeness * margin / np.linalg.norm(e)
    b = a + e
    return a, b


def variance_study(trials=100, dim=40, draws=200, probe_count=20, degree=15,
                   delta=0.05, closeness=0.5, seed=0):
    """Shared vs independent probes on pairs of nearby matrices.

    For each pair, ``draws`` repetitions estimate log det A - log det B
    twice: once with one probe set used for both matrices, once with two
    independent sets.  Reports the empirical variances next to the analytic
    shared-probe bound.
    """
    expansion = chebyshev_coefficients(degree, delta)
    rng_pair = substream(seed, "variance-pairs")
    rng_probe = substream(seed, "probes")
    reports = []
    for trial in range(trials):
        a, b = _banded_pair(dim, delta, closeness, rng_pair)
        op_a = RescaledOperator(operator=a, scale=1.0, delta=delta, dim=dim)
        op_b = RescaledOperator(operator=b, scale=1.0, delta=delta, dim=dim)
        shared = np.empty(draws)
        indep = np.empty(draws)
        for r in range(draws):
            probes = rademacher_probes(dim, probe_count, rng_probe)
            shared[r] = (estimate_logdet(op_a, expansion, probes)
                         - estimate_logdet(op_b, expansion, probes))
            other = rademacher_probes(dim, probe_count, rng_probe)
            indep[r] = (estimate_logdet(op_a, expansion, probes)
                        - estimate_logdet(op_b, expansion, other))
        fro = float(np.linalg.norm(a - b))
        reports.append(VarianceReport(
            trial=trial,
            frobenius_diff=fro,
            var_shared=float(shared.var(ddof=1)),
            var_indep=float(indep.var(ddof=1)),
            bound=probe_variance_bound(delta, probe_count, fro),
        ))
    return reports


def write_rows_csv(rows, path):
    """Write comparison/sweep rows with the fixed column schema."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for row in rows:
            writer.writerow([
                row.algo, row.seed, row.d, row.params, row.set_size,
                f"{row.logdet:.6f}", f"{row.ratio:.6f}", f"{row.ms:.3f}",
                f"{row.speedup:.3f}", row.cg_iters, row.exact_evals,
            ])


def write_rows_json(rows, config, path):
    """JSON mirror of the CSV, plus the resolved config and selected sets."""
    payload = {
        "config": asdict(config),
        "rows": [asdict(row) for row in rows],
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, default=_json_default)
        fh.write("\n")


def _json_default(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def write_variance_csv(reports, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["trial", "frobenius_diff", "var_shared", "var_indep", "bound"])
        for rep in reports:
            writer.writerow([
                rep.trial, f"{rep.frobenius_diff:.9f}", f"{rep.var_shared:.9e}",
                f"{rep.var_indep:.9e}", f"{rep.bound:.9e}",
            ])
