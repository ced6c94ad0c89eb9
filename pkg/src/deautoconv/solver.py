"""Tikhonov-regularized deautoconvolution by damped Gauss-Newton.

The objective is

    J_alpha(u) = ||A_k[u] - g_delta||^2 + alpha ||u||^2

over complex signals on [0, 1], with the quadrature norms of the signal
module.  Each outer step linearizes the quadratic forward map at the current
iterate u (derivative J_u = derivative_apply(u, .)), solves the normal
equations

    (J_u^* J_u + alpha Id) h = -(J_u^*(A_k[u] - g_delta) + alpha u)

by conjugate gradients in the real inner product, and backtracks the step
length from 1 by halving until the objective decreases.  Near a minimizer
the true per-step decrease falls below floating-point resolution of the
objective while the gradient is still orders of magnitude above the
first-order tolerance; the backtracking is then blind.  On such a plateau
the solver accepts the undamped Gauss-Newton step whenever it strictly
contracts the gradient norm, which drives the iterate into the stopping
criterion wherever the Gauss-Newton fixed-point map is locally contractive.
For the trivial kernel every operator application is an FFT-sized
convolution or correlation, so one CG iteration costs O(N log N).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .forward import Kernel, TRIVIAL_KERNEL, autoconvolve, derivative_adjoint, derivative_apply
from .signal import GridSignal, inner_real, norm


class IndefiniteOperatorError(RuntimeError):
    """Negative curvature encountered in CG: the operator is not positive."""


@dataclass(frozen=True, eq=False)
class TikhonovConfig:
    """Regularization weight, start iterate, and solver controls.

    alpha = 0 turns off regularization and is only accepted with
    allow_zero_alpha, since the normal equations then lose their positive
    shift.
    """

    alpha: float
    start: GridSignal
    outer_max: int = 200
    outer_tol: float = 1e-10
    cg_max: int = 2000
    cg_tol: float = 1e-10
    step_min: float = 2.0**-20
    circulant_preconditioner: bool = False
    allow_zero_alpha: bool = False

    def __post_init__(self):
        if not np.isfinite(self.alpha) or self.alpha < 0.0:
            raise ValueError(f"alpha must be finite and >= 0, got {self.alpha}")
        if self.alpha == 0.0 and not self.allow_zero_alpha:
            raise ValueError("alpha = 0 requires allow_zero_alpha=True")
        if self.start.domain_length != 1:
            raise ValueError("start iterate must live on [0, 1]")
        if self.outer_tol <= 0.0 or self.cg_tol <= 0.0 or self.step_min <= 0.0:
            raise ValueError("tolerances must be positive")
        if self.outer_max < 0 or self.cg_max < 1:
            raise ValueError("iteration caps must be nonnegative / positive")


@dataclass(frozen=True, eq=False)
class SolveReport:
    """Outcome of one Gauss-Newton run.

    objective equals tikhonov_value(u_star) for the run's data; grad_norm is
    the first-order residual at u_star; converged means the relative
    gradient criterion was met (a stalled line search or exhausted outer_max
    reports converged=False with the best iterate found).
    """

    u_star: GridSignal
    objective: float
    outer_iterations: int
    cg_iterations: int
    converged: bool
    grad_norm: float
    failure_reason: str | None = None


REPORT_CSV_HEADER = "objective,outer_iterations,cg_iterations,converged,grad_norm"


def report_csv_row(report: SolveReport) -> str:
    return ",".join(
        (
            repr(float(report.objective)),
            str(report.outer_iterations),
            str(report.cg_iterations),
            "true" if report.converged else "false",
            repr(float(report.grad_norm)),
        )
    )


# -- objective and gradient ------------------------------------------------------


def tikhonov_value(
    u: GridSignal, g_delta: GridSignal, alpha: float, kernel: Kernel = TRIVIAL_KERNEL
) -> float:
    """J_alpha(u) = ||A_k[u] - g_delta||^2 + alpha ||u||^2."""
    if alpha < 0.0:
        raise ValueError(f"alpha must be >= 0, got {alpha}")
    residual = autoconvolve(u, kernel) - g_delta
    return norm(residual) ** 2 + alpha * norm(u) ** 2


def tikhonov_gradient(
    u: GridSignal, g_delta: GridSignal, alpha: float, kernel: Kernel = TRIVIAL_KERNEL
) -> GridSignal:
    """Gradient of J_alpha at u with respect to the real inner product."""
    residual = autoconvolve(u, kernel) - g_delta
    return 2.0 * derivative_adjoint(u, residual, kernel) + (2.0 * alpha) * u


# -- conjugate gradients -----------------------------------------------------------


@dataclass(frozen=True, eq=False)
class CGResult:
    solution: GridSignal
    iterations: int
    converged: bool
    residual_norm: float


def cg_solve(
    apply_op,
    rhs: GridSignal,
    cg_tol: float = 1e-10,
    cg_max: int = 2000,
    preconditioner=None,
) -> CGResult:
    """Conjugate gradients for a self-adjoint positive operator on signals.

    Runs in the real inner product, starting from zero, until the residual
    norm falls below cg_tol * ||rhs|| or cg_max iterations are spent (the
    flag reports which).  An optional preconditioner maps residuals to
    search directions and must itself be self-adjoint positive.  Raises
    IndefiniteOperatorError on nonpositive curvature.
    """
    x = 0.0 * rhs
    rhs_norm = norm(rhs)
    if rhs_norm == 0.0:
        return CGResult(x, 0, True, 0.0)
    r = rhs
    z = preconditioner(r) if preconditioner is not None else r
    p = z
    rz = inner_real(r, z)
    residual_norm = rhs_norm
    for iteration in range(1, cg_max + 1):
        ap = apply_op(p)
        curvature = inner_real(p, ap)
        if curvature <= 0.0:
            raise IndefiniteOperatorError(
                f"nonpositive curvature {curvature:.3e} at CG iteration {iteration}"
            )
        gamma = rz / curvature
        x = x + gamma * p
        r = r - gamma * ap
        residual_norm = norm(r)
        if residual_norm <= cg_tol * rhs_norm:
            return CGResult(x, iteration, True, residual_norm)
        z = preconditioner(r) if preconditioner is not None else r
        rz_next = inner_real(r, z)
        p = z + (rz_next / rz) * p
        rz = rz_next
    return CGResult(x, cg_max, False, residual_norm)


def circulant_preconditioner(u: GridSignal, alpha: float):
    """Closure approximating (J_u^* J_u + alpha Id)^{-1} for the trivial kernel.

    The derivative at u is a Toeplitz convolution with symbol (2/N) u; its
    normal operator is approximated by the circulant with symbol
    (4/N^2) |fft(u)|^2 on a padded grid, inverted pointwise.  The result is
    a Galerkin restriction of a positive circulant, hence self-adjoint
    positive, as conjugate gradients require.
    """
    n = u.resolution
    pad_len = 1 << int(np.ceil(np.log2(2 * n + 2)))
    symbol = (4.0 / n**2) * np.abs(np.fft.fft(u.samples, pad_len)) ** 2 + alpha

    def apply(r: GridSignal) -> GridSignal:
        smoothed = np.fft.ifft(np.fft.fft(r.samples, pad_len) / symbol)
        return GridSignal(smoothed[: n + 1], n, domain_length=1)

    return apply


# -- Gauss-Newton ---------------------------------------------------------------------


def gauss_newton_solve(
    g_delta: GridSignal, kernel: Kernel = TRIVIAL_KERNEL, config: TikhonovConfig = None
) -> SolveReport:
    """Minimize the Tikhonov functional by damped Gauss-Newton.

    Each step is accepted either by the backtracking line search (strict
    objective decrease) or, once the objective is flat to floating-point
    resolution, as a full Gauss-Newton step that strictly reduces the
    gradient norm; the objective therefore never rises above its starting
    value beyond roundoff.  Termination: relative gradient norm below
    outer_tol * (1 + ||g_delta||) (converged), a step that neither
    decreases the objective nor the gradient (stall), or outer_max accepted
    steps.
    """
    if config is None:
        raise ValueError("gauss_newton_solve requires a TikhonovConfig")
    if g_delta.domain_length != 2:
        raise ValueError("data must live on [0, 2]")
    alpha = config.alpha
    use_circulant = config.circulant_preconditioner
    if use_circulant and not kernel.is_trivial:
        warnings.warn(
            "circulant preconditioner applies to the trivial kernel only; "
            "falling back to the identity",
            stacklevel=2,
        )
        use_circulant = False

    u = config.start
    objective = tikhonov_value(u, g_delta, alpha, kernel)
    gradient_scale = 1.0 + norm(g_delta)
    accepted_steps = 0
    cg_total = 0
    converged = False
    reason = None

    while True:
        gradient = tikhonov_gradient(u, g_delta, alpha, kernel)
        grad_norm = norm(gradient)
        if grad_norm <= config.outer_tol * gradient_scale:
            converged = True
            break
        if accepted_steps >= config.outer_max:
            reason = f"outer_max={config.outer_max} reached"
            break

        rhs = -0.5 * gradient

        def normal_apply(h: GridSignal) -> GridSignal:
            return derivative_adjoint(u, derivative_apply(u, h, kernel), kernel) + alpha * h

        preconditioner = circulant_preconditioner(u, alpha) if use_circulant else None
        try:
            cg = cg_solve(normal_apply, rhs, config.cg_tol, config.cg_max, preconditioner)
        except IndefiniteOperatorError as err:
            reason = str(err)
            break
        cg_total += cg.iterations

        step = 1.0
        accepted = False
        while step >= config.step_min:
            trial = u + step * cg.solution
            trial_objective = tikhonov_value(trial, g_delta, alpha, kernel)
            if trial_objective < objective:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            # Objective flat at float resolution: take the undamped step if
            # it still makes first-order progress.
            trial = u + cg.solution
            trial_gradient = tikhonov_gradient(trial, g_delta, alpha, kernel)
            if norm(trial_gradient) < grad_norm:
                trial_objective = tikhonov_value(trial, g_delta, alpha, kernel)
                accepted = True
            else:
                reason = (
                    f"no descent: line search stalled at step < "
                    f"{config.step_min:.2e} and the full step does not "
                    f"reduce the gradient"
                )
                break
        u = trial
        objective = trial_objective
        accepted_steps += 1

    return SolveReport(
        u_star=u,
        objective=objective,
        outer_iterations=accepted_steps,
        cg_iterations=cg_total,
        converged=converged,
        grad_norm=grad_norm,
        failure_reason=reason,
    )


def random_start(u_ref: GridSignal, radius: float, seed: int) -> GridSignal:
    """u_ref plus a complex Gaussian perturbation of exact norm radius * ||u_ref||."""
    if radius < 0.0:
        raise ValueError(f"radius must be >= 0, got {radius}")
    if radius == 0.0:
        return u_ref
    rng = np.random.default_rng(seed)
    while True:
        draw = rng.standard_normal(u_ref.samples.size) + 1j * rng.standard_normal(
            u_ref.samples.size
        )
        draw_norm = np.sqrt(np.sum(np.abs(draw) ** 2) / u_ref.resolution)
        if draw_norm > 0.0:
            break
    return u_ref.with_samples(
        u_ref.samples + draw * (radius * norm(u_ref) / draw_norm)
    )
