"""Finite-dimensional testbed for lifted subgradient calculus on R^d, d <= 8.

A lifted subgradient of F at u is a pair (xi, Xi) of a vector and a
symmetric matrix making the affine-plus-quadratic minorant global:

    F(v) >= F(u) + <xi, v - u> + <Xi, v v^T - u u^T>    for all v,

where the matrix pairing is the Frobenius inner product, so
<Xi, v v^T - u u^T> = v^T Xi v - u^T Xi u.  Unlike convex subgradients,
the quadratic term lets nonconvex functions such as the squared Hilbert
norm acquire nonempty subdifferentials; the price is that familiar calculus
rules degrade (the sum rule only holds as an inclusion, and equality fails
on concrete examples reproduced here).

All verification in this module is by evaluation on finite test sets: the
defining inequality is universally quantified, so checks report the worst
slack over the supplied points rather than claiming a proof.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

MAX_DIMENSION = 8


def as_vector(x) -> np.ndarray:
    """Coerce to a finite 1-d float array of dimension <= 8."""
    arr = np.atleast_1d(np.asarray(x, dtype=float))
    if arr.ndim != 1:
        raise ValueError(f"expected a vector, got shape {arr.shape}")
    if arr.size == 0 or arr.size > MAX_DIMENSION:
        raise ValueError(f"dimension must be in 1..{MAX_DIMENSION}, got {arr.size}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("vector entries must be finite")
    return arr


def as_sym_matrix(m, dim: int) -> np.ndarray:
    """Coerce to a finite symmetric (dim, dim) float array; rejects asymmetry."""
    arr = np.atleast_2d(np.asarray(m, dtype=float))
    if arr.shape != (dim, dim):
        raise ValueError(f"expected shape ({dim}, {dim}), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("matrix entries must be finite")
    if not np.array_equal(arr, arr.T):
        raise ValueError("matrix must be symmetric entry-for-entry")
    return arr


@dataclass(frozen=True, eq=False)
class DilinearSubgradient:
    """Candidate pair (xi, Xi) for the lifted subgradient inequality."""

    xi: np.ndarray
    Xi: np.ndarray

    def __post_init__(self):
        xi = as_vector(self.xi)
        Xi = as_sym_matrix(self.Xi, xi.size)
        object.__setattr__(self, "xi", xi)
        object.__setattr__(self, "Xi", Xi)

    @property
    def dimension(self) -> int:
        return self.xi.size

    def pairing(self, v: np.ndarray, u: np.ndarray) -> float:
        """<xi, v - u> + v^T Xi v - u^T Xi u."""
        return float(self.xi @ (v - u) + v @ self.Xi @ v - u @ self.Xi @ u)


def zero_subgradient(dim: int) -> DilinearSubgradient:
    return DilinearSubgradient(np.zeros(dim), np.zeros((dim, dim)))


# -- the defining inequality -----------------------------------------------------


@dataclass(frozen=True, eq=False)
class SubgradientCheck:
    holds: bool
    min_slack: float
    worst_point: np.ndarray | None


def subgradient_holds(
    F, sg: DilinearSubgradient, u, test_points, tol: float = 1e-12
) -> SubgradientCheck:
    """Check the minorant inequality of sg at u over the given test points.

    A point with F(v) = +inf satisfies the inequality trivially and is
    skipped.  The slack F(v) - F(u) - pairing is accepted down to
    -tol * scale with scale = max(1, |F(u)|, |F(v)|, |v|^2, |u|^2); the
    minimum raw slack and its point are reported.
    """
    u = as_vector(u)
    if u.size != sg.dimension:
        raise ValueError("dimension mismatch between u and the subgradient")
    fu = float(F(u))
    if not np.isfinite(fu):
        raise ValueError(f"F(u) must be finite, got {fu}")
    u_sq = float(u @ u)
    holds = True
    min_slack = np.inf
    worst = None
    for point in test_points:
        v = as_vector(point)
        fv = float(F(v))
        if np.isposinf(fv):
            continue
        slack = fv - fu - sg.pairing(v, u)
        scale = max(1.0, abs(fu), abs(fv), float(v @ v), u_sq)
        if slack < -tol * scale:
            holds = False
        if slack < min_slack:
            min_slack = slack
            worst = v
    return SubgradientCheck(holds, float(min_slack), worst)


def dilinear_bregman(F, sg: DilinearSubgradient, v, u) -> float:
    """Four-term lifted Bregman value F(v) - F(u) - <xi, v-u> - <Xi, vv^T - uu^T>.

    Infinite F(v) propagates to +inf; nonnegative whenever sg is a true
    subgradient at u.
    """
    v = as_vector(v)
    u = as_vector(u)
    fv = float(F(v))
    if np.isposinf(fv):
        return np.inf
    return fv - float(F(u)) - sg.pairing(v, u)


def fermat_check(F, u_star, grid) -> bool:
    """Whether the zero pair is a lifted subgradient at u_star over the grid.

    Equivalent, by the lifted Fermat rule, to u_star minimizing F over the
    grid points.
    """
    u_star = as_vector(u_star)
    return subgradient_holds(F, zero_subgradient(u_star.size), u_star, grid).holds


# -- squared and p-th power Hilbert norms ----------------------------------------------


_NSD_TOL = 1e-12


def hilbert_norm_subgradient(u, T, p: float = 2.0) -> DilinearSubgradient:
    """Lifted subgradient of the p-th power of the Euclidean norm at u.

    T parameterizes the subdifferential and must be symmetric negative
    semi-definite (largest eigenvalue <= 1e-12).  For p = 2 the pair is
    (-2 T u, Id + T); for p in (1, 2) it is ((p ||u||^{p-2}) u - 2 T u, T),
    the gradient of the convex power plus the negative-semi-definite
    quadratic correction (with the gradient term zero at u = 0).
    """
    u = as_vector(u)
    T = as_sym_matrix(T, u.size)
    top = float(np.max(np.linalg.eigvalsh(T)))
    if top > _NSD_TOL:
        raise ValueError(
            f"T must be negative semi-definite; largest eigenvalue {top:.3e}"
        )
    if p == 2.0:
        return DilinearSubgradient(-2.0 * (T @ u), np.eye(u.size) + T)
    if not 1.0 < p < 2.0:
        raise ValueError(f"p must be 2 or in (1, 2), got {p}")
    nrm = float(np.linalg.norm(u))
    gradient = np.zeros(u.size) if nrm == 0.0 else p * nrm ** (p - 2.0) * u
    return DilinearSubgradient(gradient - 2.0 * (T @ u), T.copy())


# -- one-dimensional convexification of the lifted functional ---------------------------


@dataclass(frozen=True, eq=False)
class Convexification:
    """Lower convex envelope of t -> (t, t^2, F(t)) over grid breakpoints.

    value(v, w) is the cheapest convex combination of lifted diagonal points
    (t_n, t_n^2) hitting (v, w): by Caratheodory in the plane, combinations
    of at most three breakpoints suffice, so the search enumerates triples.
    Points where F is infinite never help and are dropped up front.
    """

    breakpoints: np.ndarray
    values: np.ndarray
    feasibility_tol: float = 1e-9

    def value(self, v: float, w: float) -> float:
        t, f = self.breakpoints, self.values
        best = np.inf
        tol = self.feasibility_tol
        if t.size == 0:
            return best
        scale = max(1.0, abs(v), abs(w))
        if t.size >= 1:
            hit = (np.abs(t - v) <= tol * scale) & (np.abs(t**2 - w) <= tol * scale)
            if np.any(hit):
                best = float(np.min(f[hit]))
        if t.size >= 2:
            i, j = np.triu_indices(t.size, k=1)
            denom = t[i] - t[j]
            weight = (v - t[j]) / denom
            matched = np.abs(weight * t[i] ** 2 + (1 - weight) * t[j] ** 2 - w) <= tol * scale
            feasible = matched & (weight >= -tol) & (weight <= 1 + tol)
            if np.any(feasible):
                combo = weight * f[i] + (1 - weight) * f[j]
                best = min(best, float(np.min(combo[feasible])))
        if t.size >= 3:
            idx = np.array(list(itertools.combinations(range(t.size), 3)))
            t1, t2, t3 = t[idx[:, 0]], t[idx[:, 1]], t[idx[:, 2]]
            a1 = (t2 * t3 - (t2 + t3) * v + w) / ((t1 - t2) * (t1 - t3))
            a2 = (t1 * t3 - (t1 + t3) * v + w) / ((t2 - t1) * (t2 - t3))
            a3 = (t1 * t2 - (t1 + t2) * v + w) / ((t3 - t1) * (t3 - t2))
            feasible = (a1 >= -tol) & (a2 >= -tol) & (a3 >= -tol)
            if np.any(feasible):
                combo = (
                    a1 * f[idx[:, 0]] + a2 * f[idx[:, 1]] + a3 * f[idx[:, 2]]
                )
                best = min(best, float(np.min(combo[feasible])))
        return best

    def on_grid(self, vs, ws) -> np.ndarray:
        return np.array([[self.value(v, w) for w in ws] for v in vs])


def convexify_1d(F, breakpoints) -> Convexification:
    """Brute-force convexification of the lifted one-dimensional functional.

    F is a scalar function on R (values may be +inf); breakpoints are the
    grid over which convex combinations are searched.
    """
    t = np.unique(np.asarray(breakpoints, dtype=float))
    if not np.all(np.isfinite(t)):
        raise ValueError("breakpoints must be finite")
    values = np.array([float(F(ti)) for ti in t])
    keep = ~np.isposinf(values)
    if not np.all(np.isfinite(values[keep])):
        raise ValueError("F values must be finite or +inf")
    return Convexification(t[keep], values[keep])


# -- the failing sum rule -----------------------------------------------------------


def _abs_fn(v) -> float:
    return float(np.abs(np.asarray(v)).sum())


def _interval_indicator(v) -> float:
    x = float(np.asarray(v).reshape(()))
    return 0.0 if -1.0 <= x <= 1.0 else np.inf


def _abs_plus_indicator(v) -> float:
    return _abs_fn(v) + _interval_indicator(v)


@dataclass(frozen=True, eq=False)
class SumRuleReport:
    """Evidence that the lifted sum rule is a strict inclusion.

    For F = |.| and G the indicator of [-1, 1] in one dimension: every line
    pair (c1, c2 t^2) with slope c1 in [-1, 1] and c2 <= 0 is a subgradient
    of F at 0; the upward parabola pair (0, 1) is a subgradient of F + G at
    0 (t^2 <= |t| on [-1, 1]) but not of F alone, witnessed by a point where
    the parabola overtakes the absolute value.
    """

    abs_set_holds: bool
    parabola_holds_for_sum: bool
    parabola_fails_for_abs: bool
    witness_point: float
    witness_slack: float

    @property
    def consistent(self) -> bool:
        return (
            self.abs_set_holds
            and self.parabola_holds_for_sum
            and self.parabola_fails_for_abs
        )


def sum_rule_counterexample() -> SumRuleReport:
    """Construct the one-dimensional strict-inclusion evidence."""
    grid = [np.array([x]) for x in np.linspace(-3.0, 3.0, 601)]
    origin = np.zeros(1)

    abs_set_holds = True
    for c1 in np.linspace(-1.0, 1.0, 9):
        for c2 in (0.0, -0.25, -1.0, -4.0):
            sg = DilinearSubgradient(np.array([c1]), np.array([[c2]]))
            if not subgradient_holds(_abs_fn, sg, origin, grid).holds:
                abs_set_holds = False

    parabola = DilinearSubgradient(np.zeros(1), np.eye(1))
    sum_check = subgradient_holds(_abs_plus_indicator, parabola, origin, grid)
    abs_check = subgradient_holds(_abs_fn, parabola, origin, grid)
    worst = abs_check.worst_point
    return SumRuleReport(
        abs_set_holds=abs_set_holds,
        parabola_holds_for_sum=sum_check.holds,
        parabola_fails_for_abs=not abs_check.holds,
        witness_point=float(worst[0]) if worst is not None else np.nan,
        witness_slack=abs_check.min_slack,
    )
