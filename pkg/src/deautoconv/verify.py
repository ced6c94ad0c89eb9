"""Built-in verification suites: re-run the library's defining identities.

Each suite exercises one module's contracts on fresh random data at small
resolutions (N in {16, 64}) and dimensions (d in {1, 2, 4}) and reports the
worst slack it saw: the largest normalized violation of an identity, or the
most negative margin of an inequality, folded to a single nonnegative
number where 0 is perfect and anything above the suite tolerance fails.
All operator calls go through module attributes (forward.autoconvolve, not
a local import), so a fault injected by rebinding a module function is
caught by the corresponding suite.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import diagnostics, forward, signal, solver, spectral, subdiff

RESOLUTIONS = (16, 64)
DIMENSIONS = (1, 2, 4)


@dataclass(frozen=True, eq=False)
class SuiteResult:
    name: str
    passed: bool
    worst_slack: float
    tolerance: float

    def line(self) -> str:
        state = "pass" if self.passed else "FAIL"
        return (
            f"suite {self.name}: {state} "
            f"(worst slack {self.worst_slack:.3e}, tolerance {self.tolerance:.1e})"
        )


def _random_signal(rng, n: int, domain_length: int = 1) -> signal.GridSignal:
    size = domain_length * n + 1
    samples = rng.standard_normal(size) + 1j * rng.standard_normal(size)
    return signal.GridSignal(samples, n, domain_length=domain_length)


def _sample_kernel(n: int) -> forward.Kernel:
    return forward.Kernel.from_function(
        lambda s, t: np.exp(1j * np.pi * s * (t - s)) + 0.3 * t, n
    )


# -- suites ---------------------------------------------------------------------


def suite_adjoint(seed: int = 0) -> SuiteResult:
    """Adjoint identities of the lifting operator and the derivative."""
    rng = np.random.default_rng(seed)
    tol = 1e-10
    worst = 0.0
    for n in RESOLUTIONS:
        for kernel in (forward.TRIVIAL_KERNEL, _sample_kernel(n)):
            for _ in range(10):
                w = forward.TwoVarFunction(
                    rng.standard_normal((n + 1, n + 1))
                    + 1j * rng.standard_normal((n + 1, n + 1)),
                    n,
                )
                phi = _random_signal(rng, n, 2)
                lhs = signal.inner_real(forward.g_apply(w, kernel), phi)
                rhs = forward.inner_real_two_var(w, forward.g_adjoint(phi, kernel))
                scale = forward.norm_two_var(w) * signal.norm(phi)
                worst = max(worst, abs(lhs - rhs) / scale)

                u = _random_signal(rng, n)
                h = _random_signal(rng, n)
                r = _random_signal(rng, n, 2)
                lhs = signal.inner_real(forward.derivative_apply(u, h, kernel), r)
                rhs = signal.inner_real(h, forward.derivative_adjoint(u, r, kernel))
                scale = signal.norm(u) * signal.norm(h) * signal.norm(r)
                worst = max(worst, abs(lhs - rhs) / scale)
    return SuiteResult("adjoint", worst <= tol, worst, tol)


def _direct_autoconvolve(u: signal.GridSignal, kernel: forward.Kernel) -> signal.GridSignal:
    """Quadrature-sum reference for the forward map, O(N^2) explicit loops."""
    n = u.resolution
    strip = kernel.strip(n)
    out = np.zeros(2 * n + 1, dtype=np.complex128)
    for m in range(2 * n + 1):
        total = 0.0 + 0.0j
        for j in range(max(0, m - n), min(n, m) + 1):
            total += strip[j, m - j] * u.samples[j] * u.samples[m - j]
        out[m] = total / n
    return signal.GridSignal(out, n, domain_length=2)


def suite_forward(seed: int = 0) -> SuiteResult:
    """Forward map against closed forms, direct sums, and its factorization."""
    rng = np.random.default_rng(seed)
    tol = 1e-10
    worst = 0.0
    for n in RESOLUTIONS:
        # indicator autoconvolution: the triangle min(t, 2 - t), quadrature
        # error at most 2/n, checked with slack normalized by that budget
        ones = signal.constant(1.0, n)
        t = np.arange(2 * n + 1) / n
        triangle = np.minimum(t, 2.0 - t)
        err = np.max(np.abs(forward.autoconvolve(ones).samples - triangle))
        worst = max(worst, err / (2.0 / n) * tol)

        for kernel in (forward.TRIVIAL_KERNEL, _sample_kernel(n)):
            u = _random_signal(rng, n)
            direct = _direct_autoconvolve(u, kernel)
            fast = forward.autoconvolve(u, kernel)
            worst = max(
                worst, signal.norm(fast - direct) / max(signal.norm(direct), 1.0)
            )
            # factorization through the lifted operator
            lifted = forward.g_apply(forward.outer(u), kernel)
            worst = max(
                worst, signal.norm(fast - lifted) / max(signal.norm(fast), 1.0)
            )
            # bilinear symmetry
            v = _random_signal(rng, n)
            worst = max(
                worst,
                signal.norm(
                    forward.bilinear_apply(u, v, kernel)
                    - forward.bilinear_apply(v, u, kernel)
                )
                / max(signal.norm(u) * signal.norm(v), 1.0),
            )
    return SuiteResult("forward", worst <= tol, worst, tol)


def suite_spectral(seed: int = 0) -> SuiteResult:
    """Spectrum symmetry, rank-one closed form, and certificate invariants."""
    tol = 1e-8
    worst = 0.0
    for n in RESOLUTIONS:
        # rank-one closed form for the constant source element
        op = spectral.PhiOperator(spectral.builtin_source("const:2", n))
        result = spectral.power_iterate(op, seed=seed)
        closed = 2.0 * (n + 1) / n
        worst = max(worst, abs(result.value - closed) / closed)
        second = spectral.second_eigenvalue(op, result.vector, seed=seed + 1)
        worst = max(worst, abs(second.value))

    # dense spectrum pairs as +/- lambda, and power iteration matches dense
    n = 16
    for which in (1, 3):
        op = spectral.PhiOperator(spectral.builtin_source(which, n))
        eigs = spectral.dense_eigenvalues(op)
        pairing = np.max(np.abs(np.sort(eigs) + np.sort(-eigs)[::-1]))
        worst = max(worst, pairing / np.max(np.abs(eigs)))
        result = spectral.power_iterate(op, seed=seed)
        worst = max(worst, abs(result.value - np.max(eigs)) / np.max(eigs))

    # built-in certificate passes its own validation at N = 64
    cert = spectral.construct_source(spectral.builtin_source(3, 64), seed=seed)
    spectral.validate_certificate(cert)
    op = cert.operator()
    residual = signal.norm(spectral.phi_apply(op, cert.u_true) - cert.u_true)
    worst = max(worst, residual)
    return SuiteResult("spectral", worst <= tol, worst, tol)


def suite_bregman(seed: int = 0) -> SuiteResult:
    """Bregman distance values, lower bound, and noise-bound monotonicity."""
    rng = np.random.default_rng(seed)
    tol = 1e-9
    worst = 0.0
    for n in RESOLUTIONS:
        cert = spectral.construct_source(spectral.builtin_source(3, n), seed=seed)
        u = cert.u_true
        worst = max(worst, abs(diagnostics.bregman_distance(u, cert)))
        worst = max(worst, abs(diagnostics.bregman_distance(-1.0 * u, cert)))
        worst = max(
            worst,
            abs(diagnostics.bregman_distance(1j * u, cert) - 2.0 * signal.norm(u) ** 2),
        )
        for _ in range(100):
            v = _random_signal(rng, n)
            gap = diagnostics.bregman_distance(v, cert) - diagnostics.bregman_lower_bound(
                v, cert
            )
            scale = max(1.0, signal.norm(v) ** 2)
            worst = max(worst, -gap / scale)
    breg_small, disc_small = diagnostics.error_bounds(1e-4, 1e-2, cert)
    breg_large, disc_large = diagnostics.error_bounds(1e-3, 1e-2, cert)
    if not (breg_small < breg_large and disc_small < disc_large):
        worst = max(worst, 1.0)
    return SuiteResult("bregman", worst <= tol, worst, tol)


def suite_solver(seed: int = 0) -> SuiteResult:
    """Gradient versus finite differences, CG exactness, descent, bounds."""
    rng = np.random.default_rng(seed)
    tol = 1e-6
    worst = 0.0
    n = 16
    cert = spectral.construct_source(spectral.builtin_source(3, n), seed=seed)
    g_delta = signal.add_noise(cert.g_true, signal.NoiseSpec(1e-3, seed=seed + 1))
    for kernel in (forward.TRIVIAL_KERNEL, _sample_kernel(n)):
        for _ in range(3):
            u = _random_signal(rng, n)
            h = _random_signal(rng, n)
            grad = solver.tikhonov_gradient(u, g_delta, 0.05, kernel)
            eps = 1e-6
            plus = solver.tikhonov_value(u + eps * h, g_delta, 0.05, kernel)
            minus = solver.tikhonov_value(u + (-eps) * h, g_delta, 0.05, kernel)
            fd = (plus - minus) / (2.0 * eps)
            an = signal.inner_real(grad, h)
            worst = max(worst, abs(fd - an) / max(abs(fd), 1.0))

    # CG against a dense solve on the real stacking of a random SPD operator
    dim = 2 * (n + 1)
    raw = rng.standard_normal((dim, dim))
    spd = raw @ raw.T + dim * np.eye(dim)

    def apply_op(x: signal.GridSignal) -> signal.GridSignal:
        stacked = np.concatenate([x.samples.real, x.samples.imag])
        out = spd @ stacked
        return signal.GridSignal(out[: n + 1] + 1j * out[n + 1 :], n)

    rhs = _random_signal(rng, n)
    got = solver.cg_solve(apply_op, rhs, cg_tol=1e-12).solution
    dense = np.linalg.solve(spd, np.concatenate([rhs.samples.real, rhs.samples.imag]))
    want = signal.GridSignal(dense[: n + 1] + 1j * dense[n + 1 :], n)
    worst = max(worst, signal.norm(got - want) / signal.norm(want) * 1e2)

    # a short solve descends and satisfies the discrepancy bound
    delta, alpha = 1e-3, 0.1
    start = solver.random_start(cert.u_true, 0.3, seed=seed + 2)
    report = solver.gauss_newton_solve(
        g_delta, config=solver.TikhonovConfig(alpha=alpha, start=start)
    )
    if report.objective > solver.tikhonov_value(start, g_delta, alpha) * (1 + 1e-12):
        worst = max(worst, 1.0)
    record = diagnostics.evaluate_record(
        report.u_star, g_delta, cert, delta, alpha, 0, 0, report.converged
    )
    if record.discrepancy > record.discrepancy_bound:
        worst = max(worst, 1.0)
    return SuiteResult("solver", worst <= tol, worst, tol)


def suite_subdiff(seed: int = 0) -> SuiteResult:
    """Norm-power subgradients, counterexample report, convexification."""
    rng = np.random.default_rng(seed)
    tol = 1e-9
    worst = 0.0
    for dim in DIMENSIONS:
        for p in (2.0, 1.5):
            for _ in range(5):
                u = rng.standard_normal(dim)
                raw = rng.standard_normal((dim, dim))
                t_mat = -(raw @ raw.T)
                sg = subdiff.hilbert_norm_subgradient(u, t_mat, p=p)
                points = [3.0 * rng.standard_normal(dim) for _ in range(40)]
                check = subdiff.subgradient_holds(
                    lambda v: float(np.linalg.norm(v) ** p), sg, u, points
                )
                scale = max(1.0, float(u @ u))
                worst = max(worst, -check.min_slack / scale if check.min_slack < 0 else 0.0)

    report = subdiff.sum_rule_counterexample()
    if not report.consistent:
        worst = max(worst, 1.0)

    target = np.array([0.25, -0.5])
    grid = [rng.standard_normal(2) for _ in range(50)] + [target]
    if not subdiff.fermat_check(lambda v: float((v - target) @ (v - target)), target, grid):
        worst = max(worst, 1.0)
    if subdiff.fermat_check(lambda v: float((v - target) @ (v - target)), np.zeros(2), grid):
        worst = max(worst, 1.0)

    # diagonal restriction of the one-dimensional convexification
    breakpoints = np.linspace(-2.0, 2.0, 33)
    envelope = subdiff.convexify_1d(np.abs, breakpoints)
    for t in breakpoints:
        worst = max(worst, abs(envelope.value(t, t * t) - abs(t)))
    return SuiteResult("subdiff", worst <= tol, worst, tol)


REGISTRY = {
    "adjoint": suite_adjoint,
    "forward": suite_forward,
    "spectral": suite_spectral,
    "bregman": suite_bregman,
    "solver": suite_solver,
    "subdiff": suite_subdiff,
}


def run_suites(names=None, seed: int = 0) -> list[SuiteResult]:
    """Run the named suites (all by default) and return their results."""
    if names is None:
        names = list(REGISTRY)
    unknown = [name for name in names if name not in REGISTRY]
    if unknown:
        raise KeyError(f"unknown suites: {', '.join(unknown)} (have {', '.join(REGISTRY)})")
    return [REGISTRY[name](seed=seed) for name in names]
