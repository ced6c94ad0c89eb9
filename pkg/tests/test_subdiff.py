"""Lifted subgradient toolkit: inequality checks, norm subdifferentials,
Fermat rule, one-dimensional convexification, and the failing sum rule."""

import numpy as np
import pytest

from deautoconv.subdiff import (
    MAX_DIMENSION,
    DilinearSubgradient,
    as_sym_matrix,
    as_vector,
    convexify_1d,
    dilinear_bregman,
    fermat_check,
    hilbert_norm_subgradient,
    subgradient_holds,
    sum_rule_counterexample,
    zero_subgradient,
)


def norm_sq(v):
    v = np.asarray(v, dtype=float)
    return float(v @ v)


def random_points(rng, dim, count, scale=3.0):
    return [scale * rng.standard_normal(dim) for _ in range(count)]


def random_nsd(rng, dim):
    """Random negative semi-definite matrix with one zero eigenvalue."""
    basis, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
    eigenvalues = -np.abs(rng.standard_normal(dim))
    eigenvalues[0] = 0.0
    raw = basis @ np.diag(eigenvalues) @ basis.T
    return (raw + raw.T) / 2.0


# -- validators -------------------------------------------------------------------------


def test_vector_validation():
    assert as_vector([1, 2]).dtype == float
    with pytest.raises(ValueError, match="dimension"):
        as_vector(np.zeros(MAX_DIMENSION + 1))
    with pytest.raises(ValueError, match="finite"):
        as_vector([np.nan])


def test_sym_matrix_validation():
    as_sym_matrix(np.eye(2), 2)
    with pytest.raises(ValueError, match="symmetric"):
        as_sym_matrix(np.array([[0.0, 1.0], [0.0, 0.0]]), 2)
    with pytest.raises(ValueError, match="2"):
        as_sym_matrix(np.eye(3), 2)


# -- subgradient inequality ----------------------------------------------------------------


def test_identity_pair_is_exact_for_squared_norm():
    rng = np.random.default_rng(0)
    u = rng.standard_normal(3)
    sg = DilinearSubgradient(np.zeros(3), np.eye(3))
    check = subgradient_holds(norm_sq, sg, u, random_points(rng, 3, 200))
    assert check.holds
    assert abs(check.min_slack) <= 1e-12


def test_classical_gradient_pair_for_squared_norm():
    rng = np.random.default_rng(1)
    u = rng.standard_normal(3)
    sg = DilinearSubgradient(2.0 * u, np.zeros((3, 3)))
    check = subgradient_holds(norm_sq, sg, u, random_points(rng, 3, 200))
    assert check.holds
    assert check.min_slack >= -1e-12


def test_positive_curvature_pair_fails():
    rng = np.random.default_rng(2)
    u = np.array([1.0, 0.0, 0.0])
    sg = DilinearSubgradient(-2.0 * u, 2.0 * np.eye(3))
    points = random_points(rng, 2 + 1, 200)
    check = subgradient_holds(norm_sq, sg, u, points)
    assert not check.holds
    # Slack at v is exactly -|v - u|^2 for this pair.
    v = check.worst_point
    assert check.min_slack == pytest.approx(-norm_sq(v - u), rel=1e-9)


def test_infinite_anchor_rejected():
    def partial(v):
        return np.inf

    with pytest.raises(ValueError, match="finite"):
        subgradient_holds(partial, zero_subgradient(1), np.zeros(1), [np.zeros(1)])


def test_infinite_test_points_are_skipped():
    def indicator(v):
        return 0.0 if abs(float(v[0])) <= 1.0 else np.inf

    check = subgradient_holds(
        indicator,
        zero_subgradient(1),
        np.zeros(1),
        [np.array([0.5]), np.array([2.0])],
    )
    assert check.holds


# -- Hilbert norm subdifferential -----------------------------------------------------------


def test_squared_norm_formula_special_cases():
    u = np.array([1.0, -2.0])
    flat = hilbert_norm_subgradient(u, np.zeros((2, 2)))
    assert np.array_equal(flat.xi, np.zeros(2))
    assert np.array_equal(flat.Xi, np.eye(2))
    classical = hilbert_norm_subgradient(u, -np.eye(2))
    assert np.array_equal(classical.xi, 2.0 * u)
    assert np.array_equal(classical.Xi, np.zeros((2, 2)))


def test_power_three_halves_at_nonzero_point():
    u = np.array([3.0, 4.0])  # |u| = 5
    sg = hilbert_norm_subgradient(u, np.zeros((2, 2)), p=1.5)
    assert np.allclose(sg.xi, 1.5 * 5.0**-0.5 * u)
    assert np.array_equal(sg.Xi, np.zeros((2, 2)))


def test_power_formula_is_a_subgradient_everywhere():
    rng = np.random.default_rng(3)
    for p in (2.0, 1.5, 1.2):
        F = lambda v: float(np.linalg.norm(v) ** p)
        for dim in (1, 2, 4):
            for _ in range(5):
                u = rng.standard_normal(dim)
                T = random_nsd(rng, dim)
                sg = hilbert_norm_subgradient(u, T, p=p)
                check = subgradient_holds(F, sg, u, random_points(rng, dim, 100))
                assert check.holds, (p, dim, check.min_slack)


def test_power_formula_at_origin():
    sg = hilbert_norm_subgradient(np.zeros(2), np.zeros((2, 2)), p=1.5)
    assert np.array_equal(sg.xi, np.zeros(2))
    rng = np.random.default_rng(4)
    F = lambda v: float(np.linalg.norm(v) ** 1.5)
    assert subgradient_holds(F, sg, np.zeros(2), random_points(rng, 2, 100)).holds


def test_positive_definite_T_rejected():
    with pytest.raises(ValueError, match="negative semi-definite"):
        hilbert_norm_subgradient(np.zeros(2), 0.5 * np.eye(2))
    with pytest.raises(ValueError, match="p must be"):
        hilbert_norm_subgradient(np.zeros(2), np.zeros((2, 2)), p=3.0)


# -- Bregman values --------------------------------------------------------------------------


def test_bregman_zero_at_anchor():
    rng = np.random.default_rng(5)
    u = rng.standard_normal(3)
    sg = hilbert_norm_subgradient(u, random_nsd(rng, 3))
    assert dilinear_bregman(norm_sq, sg, u, u) == 0.0


def test_bregman_of_identity_pair_vanishes_everywhere():
    rng = np.random.default_rng(6)
    u = rng.standard_normal(3)
    sg = DilinearSubgradient(np.zeros(3), np.eye(3))
    for v in random_points(rng, 3, 50):
        assert abs(dilinear_bregman(norm_sq, sg, v, u)) <= 1e-12


def test_bregman_of_classical_pair_is_squared_distance():
    rng = np.random.default_rng(7)
    u = rng.standard_normal(3)
    sg = DilinearSubgradient(2.0 * u, np.zeros((3, 3)))
    for v in random_points(rng, 3, 50):
        assert dilinear_bregman(norm_sq, sg, v, u) == pytest.approx(
            norm_sq(v - u), rel=1e-10
        )


def test_bregman_nonnegative_for_true_subgradients():
    rng = np.random.default_rng(8)
    for dim in (1, 2, 4):
        u = rng.standard_normal(dim)
        sg = hilbert_norm_subgradient(u, random_nsd(rng, dim))
        for v in random_points(rng, dim, 50):
            assert dilinear_bregman(norm_sq, sg, v, u) >= -1e-12 * max(
                1.0, norm_sq(v)
            )


def test_bregman_propagates_infinity():
    def indicator(v):
        return 0.0 if abs(float(v[0])) <= 1.0 else np.inf

    value = dilinear_bregman(
        indicator, zero_subgradient(1), np.array([2.0]), np.zeros(1)
    )
    assert value == np.inf


# -- Fermat rule ------------------------------------------------------------------------------


def test_fermat_at_minimizer_of_squared_norm():
    rng = np.random.default_rng(9)
    grid = random_points(rng, 2, 100) + [np.zeros(2)]
    assert fermat_check(norm_sq, np.zeros(2), grid)
    assert not fermat_check(norm_sq, np.array([0.5, 0.0]), grid)


def test_fermat_for_constrained_absolute_value():
    def F(v):
        x = float(v[0])
        return abs(x) if -1.0 <= x <= 1.0 else np.inf

    grid = [np.array([x]) for x in np.linspace(-2.0, 2.0, 81)]
    assert fermat_check(F, np.zeros(1), grid)
    assert not fermat_check(F, np.array([0.5]), grid)


# -- sum rule ---------------------------------------------------------------------------------


def test_sum_rule_inclusion_for_smooth_pieces():
    # Subgradients of F and G separately sum to a subgradient of F + G.
    rng = np.random.default_rng(10)
    for dim in (1, 2, 4):
        u = rng.standard_normal(dim)
        sg_f = hilbert_norm_subgradient(u, random_nsd(rng, dim))
        sg_g = hilbert_norm_subgradient(u, random_nsd(rng, dim))
        combined = DilinearSubgradient(sg_f.xi + sg_g.xi, sg_f.Xi + sg_g.Xi)
        both = lambda v: 2.0 * norm_sq(v)
        check = subgradient_holds(both, combined, u, random_points(rng, dim, 200))
        assert check.holds


def test_sum_rule_counterexample_report():
    report = sum_rule_counterexample()
    assert report.abs_set_holds
    assert report.parabola_holds_for_sum
    assert report.parabola_fails_for_abs
    assert report.consistent
    # The worst violation of |t| >= t^2 on [-3, 3] sits at the boundary.
    assert abs(report.witness_point) == pytest.approx(3.0)
    assert report.witness_slack == pytest.approx(3.0 - 9.0)


def test_parabola_fails_for_abs_at_two():
    # Direct spot check of the strict inclusion: slack |2| - 2^2 < 0.
    parabola = DilinearSubgradient(np.zeros(1), np.eye(1))
    check = subgradient_holds(
        lambda v: abs(float(v[0])), parabola, np.zeros(1), [np.array([2.0])]
    )
    assert not check.holds
    assert check.min_slack == pytest.approx(-2.0)


# -- convexification ----------------------------------------------------------------------------


def test_convexify_square_recovers_second_coordinate():
    grid = np.linspace(-2.0, 2.0, 41)
    conv = convexify_1d(lambda t: t * t, grid)
    # Any (v, w) in the lifted hull: objective equals sum alpha t^2 = w.
    for v, w in [(0.0, 0.25), (0.5, 1.0), (-1.0, 2.5), (0.1, 0.01)]:
        assert conv.value(v, w) == pytest.approx(w, abs=1e-9)


def test_convexify_linear_recovers_first_coordinate():
    grid = np.linspace(-2.0, 2.0, 41)
    conv = convexify_1d(lambda t: t, grid)
    for v, w in [(0.0, 0.25), (0.5, 1.0), (-1.0, 2.5)]:
        assert conv.value(v, w) == pytest.approx(v, abs=1e-9)


def test_convexify_abs_weights_by_mass():
    # F = |t| on [-1, 1]: at (0, w) the optimum splits mass between +/- t
    # with alpha t^2 = w, giving value w / t minimized at the largest |t|,
    # so value = w for breakpoints reaching 1.
    grid = np.linspace(-1.0, 1.0, 81)
    conv = convexify_1d(abs, grid)
    for w in (0.25, 0.5, 1.0):
        assert conv.value(0.0, w) == pytest.approx(w, abs=1e-9)


def test_convexify_abs_spot_value_stable_under_refinement():
    coarse = convexify_1d(abs, np.linspace(-3.0, 3.0, 61))
    fine = convexify_1d(abs, np.linspace(-3.0, 3.0, 241))
    at_coarse = coarse.value(0.0, 0.25)
    at_fine = fine.value(0.0, 0.25)
    assert at_fine <= at_coarse + 1e-12
    assert at_coarse == pytest.approx(at_fine, abs=0.05)


def test_convexify_diagonal_restriction_equals_original():
    grid = np.linspace(-3.0, 3.0, 25)
    conv = convexify_1d(abs, grid)
    for t in grid:
        assert conv.value(t, t * t) == pytest.approx(abs(t), abs=1e-9)


def test_convexify_infeasible_point_is_infinite():
    conv = convexify_1d(abs, np.linspace(-1.0, 1.0, 21))
    assert conv.value(0.0, 4.0) == np.inf  # w above the reachable band
    assert conv.value(0.0, -1.0) == np.inf  # w below the diagonal hull


def test_convexify_drops_infinite_breakpoints():
    def restricted(t):
        return t * t if abs(t) <= 1.0 else np.inf

    conv = convexify_1d(restricted, np.linspace(-2.0, 2.0, 41))
    assert np.max(np.abs(conv.breakpoints)) <= 1.0
    assert conv.value(0.0, 4.0) == np.inf
