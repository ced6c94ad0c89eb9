"""Bregman distance, certified bounds, ray splitting, and rate fitting."""

import numpy as np
import pytest

from deautoconv.diagnostics import (
    ExperimentRecord,
    RECORD_CSV_HEADER,
    bregman_distance,
    bregman_lower_bound,
    error_bounds,
    evaluate_record,
    fit_rate,
    ray_distance_sq,
    record_csv_row,
    within_ray_error_sq,
)
from deautoconv.forward import autoconvolve, g_adjoint, inner_real_two_var, outer
from deautoconv.signal import NoiseSpec, add_noise, inner_real, norm
from deautoconv.spectral import builtin_source, construct_source

from conftest import random_signal


# -- Bregman distance ----------------------------------------------------------------


def test_bregman_vanishes_on_the_ray(cert3_64):
    assert abs(bregman_distance(cert3_64.u_true, cert3_64)) <= 1e-10
    assert abs(bregman_distance(-1.0 * cert3_64.u_true, cert3_64)) <= 1e-10


def test_bregman_of_rotated_solution(cert3_64):
    u = cert3_64.u_true
    expected = 2.0 * norm(u) ** 2
    assert bregman_distance(1j * u, cert3_64) == pytest.approx(expected, abs=1e-9)


def test_bregman_nonnegative_on_random_signals(cert3_64):
    rng = np.random.default_rng(0)
    for _ in range(100):
        v = random_signal(rng, 64)
        assert bregman_distance(v, cert3_64) >= -1e-10 * norm(v) ** 2


def test_bregman_operator_form_equals_four_term_form():
    # The lifted subgradient at u_true is (0, adjoint image of phi): the
    # four-term distance F(v) - F(u) - <xi, v - u> - <Xi, vv - uu> reduces
    # to the operator form used in production.
    cert = construct_source(builtin_source(3, 32))
    adj = g_adjoint(cert.phi_rescaled, cert.kernel)
    u = cert.u_true

    def four_term(v):
        lifted_gap = inner_real_two_var(adj, outer(v)) - inner_real_two_var(
            adj, outer(u)
        )
        return norm(v) ** 2 - norm(u) ** 2 - lifted_gap

    rng = np.random.default_rng(1)
    for _ in range(50):
        v = random_signal(rng, 32)
        direct = four_term(v)
        operator_form = bregman_distance(v, cert)
        scale = max(1.0, norm(v) ** 2)
        assert abs(direct - operator_form) <= 1e-9 * scale


# -- lower bound ------------------------------------------------------------------------


def test_lower_bound_vanishes_along_the_ray(cert3_64):
    u = cert3_64.u_true
    assert bregman_lower_bound(u, cert3_64) == 0.0
    assert bregman_lower_bound(1.75 * u, cert3_64) <= 1e-12


def test_lower_bound_holds_on_random_signals(cert3_64):
    rng = np.random.default_rng(2)
    for _ in range(200):
        v = random_signal(rng, 64)
        gap = bregman_distance(v, cert3_64) - bregman_lower_bound(v, cert3_64)
        assert gap >= -1e-9 * max(1.0, norm(v) ** 2)


def test_lower_bound_is_equality_for_rank_one_certificate(rankone_cert):
    # lambda2 = 0 and no spectrum between 0 and 1: any v without a rotated
    # ray component achieves the bound exactly.
    rng = np.random.default_rng(3)
    u = rankone_cert.u_true
    for _ in range(50):
        v = random_signal(rng, 64)
        v = v - (inner_real(v, 1j * u) / norm(u) ** 2) * (1j * u)
        lhs = bregman_distance(v, rankone_cert)
        rhs = bregman_lower_bound(v, rankone_cert)
        assert lhs == pytest.approx(rhs, abs=1e-9 * max(1.0, norm(v) ** 2))


# -- closed-form bounds -------------------------------------------------------------------


def test_error_bounds_at_zero_noise(cert3_64):
    phi_norm = norm(cert3_64.phi_rescaled)
    for alpha in (1e-4, 0.1, 2.0):
        bregman_bound, discrepancy_bound = error_bounds(0.0, alpha, cert3_64)
        assert bregman_bound == pytest.approx(alpha * phi_norm**2 / 4, rel=1e-12)
        assert discrepancy_bound == pytest.approx(alpha * phi_norm, rel=1e-12)


def test_error_bounds_algebra(cert3_64):
    phi_norm = norm(cert3_64.phi_rescaled)
    delta = 0.02
    alpha = delta
    bregman_bound, discrepancy_bound = error_bounds(delta, alpha, cert3_64)
    expected_b = (np.sqrt(delta) + np.sqrt(delta) * phi_norm / 2) ** 2
    assert bregman_bound == pytest.approx(expected_b, rel=1e-12)
    assert discrepancy_bound == pytest.approx(delta + alpha * phi_norm, rel=1e-12)


def test_error_bounds_reject_bad_arguments(cert3_64):
    with pytest.raises(ValueError, match="alpha"):
        error_bounds(0.1, 0.0, cert3_64)
    with pytest.raises(ValueError, match="noise"):
        error_bounds(-0.1, 1.0, cert3_64)


# -- ray splitting -------------------------------------------------------------------------


def test_ray_distance_examples(cert3_64):
    u = cert3_64.u_true
    assert ray_distance_sq(2.5 * u, cert3_64) <= 1e-12
    assert ray_distance_sq(-0.5 * u, cert3_64) <= 1e-12
    assert ray_distance_sq(1j * u, cert3_64) == pytest.approx(
        norm(u) ** 2, rel=1e-10
    )
    assert ray_distance_sq(u + 1j * u, cert3_64) == pytest.approx(
        norm(u) ** 2, rel=1e-10
    )


def test_within_ray_error_examples(cert3_64):
    u = cert3_64.u_true
    assert within_ray_error_sq(u, cert3_64) <= 1e-12
    # 2u sits one unit further along the ray; i*u has lost the whole ray part.
    assert within_ray_error_sq(2.0 * u, cert3_64) == pytest.approx(
        norm(u) ** 2, rel=1e-10
    )
    assert within_ray_error_sq(1j * u, cert3_64) == pytest.approx(
        norm(u) ** 2, rel=1e-10
    )


def test_ray_quantities_are_distinct(cert3_64):
    # Same point, different quantities: distance to the ray vs error along it.
    u = cert3_64.u_true
    v = 2.0 * u
    assert ray_distance_sq(v, cert3_64) <= 1e-12
    assert within_ray_error_sq(v, cert3_64) == pytest.approx(norm(u) ** 2, rel=1e-10)


def test_pythagorean_split(cert3_64):
    rng = np.random.default_rng(4)
    for _ in range(20):
        v = random_signal(rng, 64)
        total = norm(v - cert3_64.u_true) ** 2
        split = ray_distance_sq(v, cert3_64) + within_ray_error_sq(v, cert3_64)
        assert split == pytest.approx(total, rel=1e-10)


# -- records ---------------------------------------------------------------------------


def test_evaluate_record_fields_match_module_functions(cert3_64):
    rng = np.random.default_rng(5)
    delta, alpha = 0.05, 0.5
    g_delta = add_noise(cert3_64.g_true, NoiseSpec(delta, seed=6))
    v = random_signal(rng, 64)
    record = evaluate_record(v, g_delta, cert3_64, delta, alpha, 6, 7, True)
    assert record.discrepancy == pytest.approx(
        norm(autoconvolve(v, cert3_64.kernel) - g_delta), rel=1e-14
    )
    assert record.bregman == pytest.approx(bregman_distance(v, cert3_64), rel=1e-14)
    assert record.ray_dist_sq == pytest.approx(ray_distance_sq(v, cert3_64), rel=1e-14)
    assert record.within_ray_sq == pytest.approx(
        within_ray_error_sq(v, cert3_64), rel=1e-14
    )
    assert record.bregman_lower == pytest.approx(
        bregman_lower_bound(v, cert3_64), rel=1e-14
    )
    expected_bounds = error_bounds(delta, alpha, cert3_64)
    assert (record.bregman_bound, record.discrepancy_bound) == expected_bounds
    assert record.noise_seed == 6 and record.start_seed == 7
    assert record.converged


def test_record_csv_row_round_trips_exactly(cert3_64):
    rng = np.random.default_rng(8)
    g_delta = add_noise(cert3_64.g_true, NoiseSpec(0.01, seed=9))
    record = evaluate_record(
        random_signal(rng, 64), g_delta, cert3_64, 0.01, 1.0, 9, 10, False
    )
    row = record_csv_row(record)
    names = RECORD_CSV_HEADER.split(",")
    fields = dict(zip(names, row.split(",")))
    for name in names:
        value = getattr(record, name)
        if name == "converged":
            assert fields[name] == "false"
        elif name.endswith("seed"):
            assert int(fields[name]) == value
        else:
            assert float(fields[name]) == value


def test_record_rejects_negative_distances():
    with pytest.raises(ValueError, match="negative"):
        ExperimentRecord(
            delta=0.1,
            alpha=1.0,
            noise_seed=0,
            start_seed=0,
            discrepancy=-0.5,
            bregman=0.0,
            ray_dist_sq=0.0,
            within_ray_sq=0.0,
            discrepancy_bound=1.0,
            bregman_bound=1.0,
            bregman_lower=0.0,
            converged=True,
        )


# -- rate fitting ----------------------------------------------------------------------


def test_fit_rate_linear_decay():
    deltas = np.geomspace(1e-3, 1e-1, 6)
    fit = fit_rate([(d, 3.0 * d) for d in deltas])
    assert fit.slope == pytest.approx(1.0, abs=1e-12)
    assert fit.residual <= 1e-12


def test_fit_rate_quadratic_decay():
    deltas = np.geomspace(1e-3, 1e-1, 6)
    fit = fit_rate([(d, d**2) for d in deltas])
    assert fit.slope == pytest.approx(2.0, abs=1e-12)


def test_fit_rate_constant():
    deltas = np.geomspace(1e-3, 1e-1, 6)
    fit = fit_rate([(d, 0.7) for d in deltas])
    assert fit.slope == pytest.approx(0.0, abs=1e-12)


def test_fit_rate_invariant_under_rescaling():
    deltas = np.geomspace(1e-3, 1e-1, 8)
    values = [d**1.37 for d in deltas]
    base = fit_rate(list(zip(deltas, values))).slope
    scaled = fit_rate([(d, 1e6 * v) for d, v in zip(deltas, values)]).slope
    assert scaled == pytest.approx(base, abs=1e-12)


def test_fit_rate_rejects_short_or_nonpositive_input():
    with pytest.raises(ValueError, match=">= 3"):
        fit_rate([(1e-3, 1.0), (1e-2, 2.0)])
    with pytest.raises(ValueError, match="positive"):
        fit_rate([(1e-3, 1.0), (1e-2, -2.0), (1e-1, 3.0)])
