"""Command-line harness: certificates, single solves, sweeps, verification.

Four subcommands bind the library into reproducible batch experiments:

* ``construct-source`` builds a source certificate from a catalog or file
  source element and reports its spectral data;
* ``solve`` runs one Gauss-Newton solve on a data file and writes the
  report and reconstruction as CSV;
* ``experiment`` sweeps noise levels with restarts, emitting one record row
  per (level, restart) cell plus fitted log-log rate slopes;
* ``verify`` runs the library's invariant suites and fails on any slack.

Every run is deterministic given its seed: experiment cell (i, j) derives
its noise and start seeds from the master seed by stable hashing, so two
runs with the same plan produce byte-identical CSV bodies, and extending a
sweep never reshuffles existing cells.  A ``--config`` file holds flat
``key=value`` lines (keys are the long option names); explicit command-line
flags override it.

Exit codes: 0 success, 1 invariant or validation failure, 2 bad arguments.
"""

from __future__ import annotations

import argparse
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import verify as verify_mod
from .diagnostics import (
    ExperimentRecord,
    RECORD_CSV_HEADER,
    evaluate_record,
    fit_rate,
)
from .forward import Kernel, TRIVIAL_KERNEL, load_kernel
from .signal import GridSignal, NoiseSpec, add_noise, derive_seed, load_signal, norm, save_signal
from .solver import (
    REPORT_CSV_HEADER,
    SolveReport,
    TikhonovConfig,
    gauss_newton_solve,
    random_start,
    report_csv_row,
    tikhonov_value,
)
from .spectral import (
    CATALOG_FEATURE_WIDTH,
    SourceCertificate,
    SourceConstructionError,
    builtin_source,
    construct_source,
    load_certificate,
    save_certificate,
)

SLOPE_QUANTITIES = ("discrepancy", "bregman", "ray_dist_sq", "within_ray_sq")


# -- experiment plan ---------------------------------------------------------------


@dataclass(frozen=True)
class ExperimentPlan:
    """Noise sweep: geometric levels, restarts, and the alpha = c * delta rule.

    Noise levels are relative to ||u_true|| of the certificate; the absolute
    level delta = delta_rel * ||u_true|| is what enters the noise draw, the
    alpha rule, and the recorded bounds.
    """

    delta_min: float = 1e-3
    delta_max: float = 1e-1
    levels: int = 8
    alpha_factor: float = 100.0
    restarts: int = 25
    radius: float = 0.5
    master_seed: int = 0
    workers: int = 1

    def __post_init__(self):
        if not 0.0 < self.delta_min <= self.delta_max:
            raise ValueError(
                f"need 0 < delta_min <= delta_max, got [{self.delta_min}, {self.delta_max}]"
            )
        if self.levels < 1 or self.restarts < 1 or self.workers < 1:
            raise ValueError("levels, restarts, and workers must be >= 1")
        if self.levels == 1 and self.delta_min != self.delta_max:
            raise ValueError("a single level needs delta_min == delta_max")
        if self.radius < 0.0:
            raise ValueError(f"radius must be >= 0, got {self.radius}")
        if self.alpha_factor <= 0.0:
            raise ValueError(f"alpha_factor must be > 0, got {self.alpha_factor}")

    def noise_levels(self) -> np.ndarray:
        return np.geomspace(self.delta_min, self.delta_max, self.levels)


def _run_cell(
    plan: ExperimentPlan, cert: SourceCertificate, level: int, restart: int, delta: float
) -> ExperimentRecord:
    noise_seed = derive_seed(plan.master_seed, "noise", level, restart)
    start_seed = derive_seed(plan.master_seed, "start", level, restart)
    alpha = plan.alpha_factor * delta
    g_delta = add_noise(cert.g_true, NoiseSpec(delta, noise_seed))
    start = random_start(cert.u_true, plan.radius, start_seed)
    report = gauss_newton_solve(
        g_delta, cert.kernel, TikhonovConfig(alpha=alpha, start=start)
    )
    return evaluate_record(
        report.u_star, g_delta, cert, delta, alpha, noise_seed, start_seed, report.converged
    )


def run_experiment(plan: ExperimentPlan, cert: SourceCertificate):
    """Run all cells of the plan; returns (records, slopes).

    Records are ordered by (level, restart) regardless of worker count.
    Slopes are log-log rate fits of the per-level medians over converged
    cells; a quantity with fewer than three usable levels gets slope nan.
    """
    u_scale = norm(cert.u_true)
    deltas = plan.noise_levels() * u_scale
    cells = [
        (i, j, float(deltas[i]))
        for i in range(plan.levels)
        for j in range(plan.restarts)
    ]
    if plan.workers == 1:
        records = [_run_cell(plan, cert, *cell) for cell in cells]
    else:
        with ThreadPoolExecutor(max_workers=plan.workers) as pool:
            records = list(pool.map(lambda cell: _run_cell(plan, cert, *cell), cells))
    return records, fit_slopes(records, plan.restarts)


def fit_slopes(records, restarts: int) -> dict:
    """Log-log slopes of per-level median quantities against delta."""
    slopes = {}
    levels = [records[k : k + restarts] for k in range(0, len(records), restarts)]
    for quantity in SLOPE_QUANTITIES:
        pairs = []
        for level in levels:
            converged = [r for r in level if r.converged]
            if not converged:
                continue
            median = float(np.median([getattr(r, quantity) for r in converged]))
            if median > 0.0:
                pairs.append((level[0].delta, median))
        try:
            slopes[quantity] = float(fit_rate(pairs).slope)
        except ValueError:
            slopes[quantity] = float("nan")
    return slopes


def experiment_csv_lines(plan: ExperimentPlan, cert: SourceCertificate, records, slopes):
    """CSV body: plan header comments, record rows, slope summary rows."""
    from .diagnostics import record_csv_row

    lines = [
        "# deautoconv-experiment",
        (
            f"# N={cert.resolution} levels={plan.levels} restarts={plan.restarts}"
            f" delta_min={plan.delta_min!r} delta_max={plan.delta_max!r}"
            f" alpha_factor={plan.alpha_factor!r} radius={plan.radius!r}"
            f" master_seed={plan.master_seed}"
        ),
        RECORD_CSV_HEADER,
    ]
    lines.extend(record_csv_row(record) for record in records)
    lines.extend(f"# slope,{name},{slopes[name]!r}" for name in SLOPE_QUANTITIES)
    return lines


def read_experiment_csv(path):
    """Parse an experiment CSV back into (record value rows, slopes)."""
    rows = []
    slopes = {}
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line.startswith("# slope,"):
                _, name, value = line[2:].split(",")
                slopes[name] = float(value)
            elif line.startswith("#") or not line or line == RECORD_CSV_HEADER:
                continue
            else:
                parts = line.split(",")
                rows.append(
                    ExperimentRecord(
                        *(float(p) for p in parts[:2]),
                        *(int(p) for p in parts[2:4]),
                        *(float(p) for p in parts[4:11]),
                        parts[11] == "true",
                    )
                )
    return rows, slopes


# -- subcommands -----------------------------------------------------------------


def _load_any_kernel(path, resolution: int) -> Kernel:
    if path is None:
        return TRIVIAL_KERNEL
    kernel = load_kernel(path)
    if not kernel.is_trivial and kernel.resolution != resolution:
        raise ValueError(
            f"kernel resolution {kernel.resolution} does not match N={resolution}"
        )
    return kernel


def cmd_construct_source(args) -> int:
    resolution = args.N
    if args.phi in ("1", "2", "3"):
        which = int(args.phi)
        width = CATALOG_FEATURE_WIDTH[which]
        if 1.0 / resolution > width:
            print(
                f"warning: N={resolution} is too coarse for catalog element "
                f"{which} (finest feature width {width}, grid spacing "
                f"{1.0 / resolution:.3g}); spectral data will be unreliable",
                file=sys.stderr,
            )
        phi = builtin_source(which, resolution)
    elif args.phi.startswith("const:"):
        phi = builtin_source(args.phi, resolution)
    else:
        phi = load_signal(args.phi)
        if phi.domain_length != 2 or phi.resolution != resolution:
            raise ValueError(
                f"source element must live on [0, 2] at N={resolution}, got "
                f"L={phi.domain_length}, N={phi.resolution}"
            )
    kernel = _load_any_kernel(args.kernel, resolution)
    cert = construct_source(phi, kernel, seed=args.seed)
    print(f"lambda1 = {float(cert.lambda1)!r}")
    print(f"lambda2 = {float(cert.lambda2)!r}")
    print(f"phi_rescaled_norm = {float(norm(cert.phi_rescaled))!r}")
    print(f"u_true_norm = {float(norm(cert.u_true))!r}")
    if args.out is not None:
        save_certificate(args.out, cert)
        print(f"certificate written to {args.out}")
    return 0


def cmd_solve(args) -> int:
    g_delta = load_signal(args.data)
    if g_delta.domain_length != 2:
        raise ValueError("data must be a signal on [0, 2]")
    start = load_signal(args.start)
    kernel = _load_any_kernel(args.kernel, start.resolution)
    config = TikhonovConfig(
        alpha=args.alpha,
        start=start,
        outer_max=args.outer_max,
        outer_tol=args.outer_tol,
        cg_max=args.cg_max,
        cg_tol=args.cg_tol,
        circulant_preconditioner=args.precondition,
        allow_zero_alpha=args.alpha == 0.0,
    )
    report = gauss_newton_solve(g_delta, kernel, config)
    print(REPORT_CSV_HEADER)
    print(report_csv_row(report))
    if not report.converged:
        print(f"note: not converged ({report.failure_reason})", file=sys.stderr)
    if args.out is not None:
        report_path = f"{args.out}.report.csv"
        solution_path = f"{args.out}.solution.csv"
        with open(report_path, "w") as fh:
            fh.write(REPORT_CSV_HEADER + "\n" + report_csv_row(report) + "\n")
        save_signal(solution_path, report.u_star)
        print(f"report written to {report_path}, solution to {solution_path}")
    return 0


def cmd_experiment(args) -> int:
    cert = load_certificate(args.cert)
    if args.N is not None and args.N != cert.resolution:
        raise ValueError(
            f"--N {args.N} does not match certificate resolution {cert.resolution}"
        )
    plan = ExperimentPlan(
        delta_min=args.delta_min,
        delta_max=args.delta_max,
        levels=args.levels,
        alpha_factor=args.alpha_factor,
        restarts=args.restarts,
        radius=args.radius,
        master_seed=args.seed,
        workers=args.workers,
    )
    records, slopes = run_experiment(plan, cert)
    lines = experiment_csv_lines(plan, cert, records, slopes)
    with open(args.out, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    converged = sum(record.converged for record in records)
    print(f"{len(records)} cells, {converged} converged -> {args.out}")
    for name in SLOPE_QUANTITIES:
        print(f"slope {name} = {slopes[name]!r}")
    return 0


def cmd_verify(args) -> int:
    names = args.suite.split(",") if args.suite else None
    try:
        results = verify_mod.run_suites(names, seed=args.seed)
    except KeyError as err:
        print(f"error: {err.args[0]}", file=sys.stderr)
        return 2
    for result in results:
        print(result.line())
    return 0 if all(result.passed for result in results) else 1


# -- parser / config handling -------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="deautoconv",
        description="Kernel-based deautoconvolution with lifted Tikhonov regularization.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("construct-source", help="build and validate a source certificate")
    p.add_argument("--phi", required=True, help="1|2|3, const:<c>, or a signal CSV path")
    p.add_argument("--N", type=int, default=1024, help="grid resolution (default 1024)")
    p.add_argument("--seed", type=int, default=0, help="power-iteration seed")
    p.add_argument("--kernel", default=None, help="kernel CSV path (default trivial)")
    p.add_argument("--out", default=None, help="certificate output path")
    p.add_argument("--config", default=None, help="key=value defaults file")
    p.set_defaults(func=cmd_construct_source)

    p = sub.add_parser("solve", help="one Gauss-Newton solve on a data file")
    p.add_argument("--data", required=True, help="noisy data signal CSV on [0, 2]")
    p.add_argument("--alpha", type=float, required=True, help="regularization weight (0 allowed)")
    p.add_argument("--start", required=True, help="start iterate signal CSV on [0, 1]")
    p.add_argument("--kernel", default=None, help="kernel CSV path (default trivial)")
    p.add_argument("--outer-max", type=int, default=200)
    p.add_argument("--outer-tol", type=float, default=1e-10)
    p.add_argument("--cg-max", type=int, default=2000)
    p.add_argument("--cg-tol", type=float, default=1e-10)
    p.add_argument("--precondition", action="store_true", help="circulant preconditioner")
    p.add_argument("--out", default=None, help="output prefix for report/solution CSV")
    p.add_argument("--config", default=None, help="key=value defaults file")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("experiment", help="noise sweep with restarts, CSV output")
    p.add_argument("--cert", required=True, help="source certificate path")
    p.add_argument("--out", required=True, help="results CSV path")
    p.add_argument("--N", type=int, default=None, help="expected resolution (validated)")
    p.add_argument("--delta-min", type=float, default=1e-3, help="smallest relative noise level")
    p.add_argument("--delta-max", type=float, default=1e-1, help="largest relative noise level")
    p.add_argument("--levels", type=int, default=8, help="number of geometric levels")
    p.add_argument("--alpha-factor", type=float, default=100.0, help="alpha = factor * delta")
    p.add_argument("--restarts", type=int, default=25, help="restarts per level")
    p.add_argument("--radius", type=float, default=0.5, help="relative start perturbation")
    p.add_argument("--seed", type=int, default=0, help="master seed")
    p.add_argument("--workers", type=int, default=1, help="concurrent solver cells")
    p.add_argument("--config", default=None, help="key=value defaults file")
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("verify", help="run the built-in invariant suites")
    p.add_argument("--suite", default=None, help="comma-separated suite names (default all)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", default=None, help="key=value defaults file")
    p.set_defaults(func=cmd_verify)
    return parser


def read_config(path) -> dict:
    """Flat key=value file; blank lines and # comments ignored."""
    values = {}
    with open(path) as fh:
        for raw in fh:
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"config line without '=': {line!r}")
            key, _, value = line.partition("=")
            values[key.strip()] = value.strip()
    return values


_TRUTHY = {"1", "true", "yes", "on"}
_FALSY = {"0", "false", "no", "off"}


def _apply_config(argv: list) -> list:
    """Expand --config into CLI tokens placed before explicit flags.

    Config keys are long option names (with - or _); explicit command-line
    arguments come later in the list, so argparse lets them win.  Boolean
    keys toggle store-true flags.
    """
    if not argv or argv[0].startswith("-"):
        return argv
    path = None
    for k, token in enumerate(argv):
        if token == "--config" and k + 1 < len(argv):
            path = argv[k + 1]
        elif token.startswith("--config="):
            path = token.split("=", 1)[1]
    if path is None:
        return argv
    tokens = []
    for key, value in read_config(path).items():
        flag = "--" + key.replace("_", "-")
        low = value.lower()
        if low in _TRUTHY and key in ("precondition",):
            tokens.append(flag)
        elif low in _FALSY and key in ("precondition",):
            continue
        else:
            tokens.append(f"{flag}={value}")
    return [argv[0], *tokens, *argv[1:]]


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        expanded = _apply_config(argv)
    except (ValueError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    try:
        args = parser.parse_args(expanded)
    except SystemExit as exit_err:
        return exit_err.code if isinstance(exit_err.code, int) else 2
    try:
        return args.func(args)
    except SourceConstructionError as err:
        print(f"error: degenerate source construction: {err}", file=sys.stderr)
        return 1
    except (ValueError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
