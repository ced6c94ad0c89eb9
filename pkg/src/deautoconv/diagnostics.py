"""Error measures and theoretical bounds for certified reconstructions.

Given a source certificate (rescaled operator Phi of norm one with unit
fixed point u_true), the lifted Bregman distance of the squared norm at
u_true reduces to the operator form

    bregman(v) = ||v||^2 - <Phi[v], v>_R,

which vanishes along the ray spanned by u_true (the distance cannot see the
+/- ambiguity) and is bounded below by (1 - lambda2) times the squared
distance of v - u_true to the ray.  The a-priori bounds for the Tikhonov
minimizer are

    bregman    <= (delta / sqrt(alpha) + sqrt(alpha) / 2 * ||phi||)^2,
    discrepancy <= delta + alpha * ||phi||,

with phi the rescaled source element.  Reconstruction errors split into the
ray-orthogonal part (covered by the Bregman bound) and the within-ray part
(not covered; observed empirically to decay faster).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .forward import autoconvolve
from .signal import GridSignal, inner_real, norm
from .spectral import SourceCertificate


def bregman_distance(v: GridSignal, cert: SourceCertificate) -> float:
    """Lifted Bregman distance ||v||^2 - <Phi[v], v>_R to the certified solution.

    Nonnegative up to rounding because the rescaled operator has norm one.
    """
    op = cert.operator()
    return norm(v) ** 2 - inner_real(op.apply(v), v)


def _ray_component(w: GridSignal, cert: SourceCertificate) -> GridSignal:
    """Projection of w onto the one-dimensional ray E1 = span_R{u_true}."""
    u = cert.u_true
    return (inner_real(u, w) / norm(u) ** 2) * u


def bregman_lower_bound(v: GridSignal, cert: SourceCertificate) -> float:
    """(1 - lambda2) * ||P_{E1 orth}(v - u_true)||^2, the certified lower bound."""
    w = v - cert.u_true
    off_ray = w - _ray_component(w, cert)
    return (1.0 - cert.lambda2) * norm(off_ray) ** 2


def ray_distance_sq(v: GridSignal, cert: SourceCertificate) -> float:
    """Squared distance ||v - P_{E1}(v)||^2 of v to the ray of the true solution."""
    off_ray = v - _ray_component(v, cert)
    return norm(off_ray) ** 2


def within_ray_error_sq(v: GridSignal, cert: SourceCertificate) -> float:
    """Squared error ||P_{E1}(v - u_true)||^2 of the ray component itself.

    Distinct from ray_distance_sq: this measures how far along the ray v
    sits from u_true, the part of the error the Bregman bound cannot see.
    """
    return norm(_ray_component(v - cert.u_true, cert)) ** 2


def error_bounds(delta: float, alpha: float, cert: SourceCertificate):
    """A-priori bounds (bregman_bound, discrepancy_bound) for noise level delta.

    Requires alpha > 0; ||phi|| is the norm of the rescaled source element.
    """
    if alpha <= 0.0:
        raise ValueError(f"bounds require alpha > 0, got {alpha}")
    if delta < 0.0:
        raise ValueError(f"noise level must be >= 0, got {delta}")
    phi_norm = norm(cert.phi_rescaled)
    bregman_bound = (delta / np.sqrt(alpha) + 0.5 * np.sqrt(alpha) * phi_norm) ** 2
    discrepancy_bound = delta + alpha * phi_norm
    return float(bregman_bound), float(discrepancy_bound)


# -- experiment records -------------------------------------------------------------


@dataclass(frozen=True)
class ExperimentRecord:
    """Measured quantities of one (noise realization, start) solver cell."""

    delta: float
    alpha: float
    noise_seed: int
    start_seed: int
    discrepancy: float
    bregman: float
    ray_dist_sq: float
    within_ray_sq: float
    discrepancy_bound: float
    bregman_bound: float
    bregman_lower: float
    converged: bool

    def __post_init__(self):
        rounding_slack = -1e-8 * max(1.0, self.delta, abs(self.bregman))
        for name in ("discrepancy", "bregman", "ray_dist_sq", "within_ray_sq"):
            if getattr(self, name) < rounding_slack:
                raise ValueError(f"{name} is negative beyond rounding: {getattr(self, name)!r}")
        for name in ("discrepancy_bound", "bregman_bound", "bregman_lower"):
            if not np.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")


RECORD_CSV_HEADER = (
    "delta,alpha,noise_seed,start_seed,discrepancy,bregman,ray_dist_sq,"
    "within_ray_sq,discrepancy_bound,bregman_bound,bregman_lower,converged"
)


def record_csv_row(record: ExperimentRecord) -> str:
    return ",".join(
        (
            repr(float(record.delta)),
            repr(float(record.alpha)),
            str(record.noise_seed),
            str(record.start_seed),
            repr(float(record.discrepancy)),
            repr(float(record.bregman)),
            repr(float(record.ray_dist_sq)),
            repr(float(record.within_ray_sq)),
            repr(float(record.discrepancy_bound)),
            repr(float(record.bregman_bound)),
            repr(float(record.bregman_lower)),
            "true" if record.converged else "false",
        )
    )


def evaluate_record(
    u_star: GridSignal,
    g_delta: GridSignal,
    cert: SourceCertificate,
    delta: float,
    alpha: float,
    noise_seed: int,
    start_seed: int,
    converged: bool,
) -> ExperimentRecord:
    """Measure one reconstruction against the certificate and its bounds."""
    bregman_bound, discrepancy_bound = error_bounds(delta, alpha, cert)
    return ExperimentRecord(
        delta=delta,
        alpha=alpha,
        noise_seed=noise_seed,
        start_seed=start_seed,
        discrepancy=norm(autoconvolve(u_star, cert.kernel) - g_delta),
        bregman=bregman_distance(u_star, cert),
        ray_dist_sq=ray_distance_sq(u_star, cert),
        within_ray_sq=within_ray_error_sq(u_star, cert),
        discrepancy_bound=discrepancy_bound,
        bregman_bound=bregman_bound,
        bregman_lower=bregman_lower_bound(u_star, cert),
        converged=converged,
    )


# -- rate estimation -----------------------------------------------------------------


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    residual: float


def fit_rate(pairs) -> RateFit:
    """Least-squares slope of log(value) against log(delta).

    Needs at least three pairs; all deltas and values must be strictly
    positive.  The residual is the root-mean-square misfit of the line.
    """
    pairs = list(pairs)
    if len(pairs) < 3:
        raise ValueError(f"rate fit needs >= 3 pairs, got {len(pairs)}")
    deltas = np.array([p[0] for p in pairs], dtype=float)
    values = np.array([p[1] for p in pairs], dtype=float)
    if np.any(deltas <= 0.0) or np.any(values <= 0.0):
        raise ValueError("rate fit requires strictly positive deltas and values")
    log_d = np.log(deltas)
    log_v = np.log(values)
    slope, intercept = np.polyfit(log_d, log_v, 1)
    misfit = log_v - (slope * log_d + intercept)
    return RateFit(float(slope), float(intercept), float(np.sqrt(np.mean(misfit**2))))
