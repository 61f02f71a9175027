import math
import time
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose
from scipy import integrate

from acme.golden import random_draws
from acme.reduction import (
    ALTAMONT,
    AcmeParams,
    ClosedFormMismatch,
    ConvergenceError,
    ReductionResult,
    enumerate_qstar_indices,
    mean_persistence,
    proficiency,
    q_star_closed_alpha1,
    q_star_closed_alpha_half,
    q_star_quadrature,
    reduction_constant_case,
    reduction_factor,
    simpson,
    survival,
    term_t_star,
    truncation_bound,
)


def quad_term(p: AcmeParams, k: int) -> float:
    """T*_k by adaptive quadrature of the product-form integrand (scipy oracle)."""
    rho, al = p.removal.rho, p.removal.alpha
    a, b, I = p.discovery.a, p.discovery.b, p.interval

    def f(x):
        val = math.exp(-((rho * x * I) ** al) - a - x * b * I)
        for n in range(1, k + 1):
            val *= 1.0 - math.exp(-a - (x - n) * b * I)
        return val

    val, _ = integrate.quad(f, k, k + 1, epsabs=0, epsrel=1e-13, limit=200)
    return p.bleed**k * val


def test_survival_and_proficiency():
    assert_allclose(survival(ALTAMONT.removal, 0.0), 1.0)
    assert_allclose(survival(ALTAMONT.removal, 10.0), math.exp(-((0.809) ** 0.4695)))
    assert_allclose(proficiency(ALTAMONT.discovery, 0.0), 0.3562, atol=5e-5)
    with pytest.raises(ValueError):
        survival(ALTAMONT.removal, -1.0)


def test_mean_persistence():
    assert_allclose(mean_persistence(ALTAMONT.removal), 27.97, atol=0.05)


def test_simpson_polynomial_and_smooth():
    assert_allclose(simpson(lambda x: x**3, 0.0, 2.0), 4.0, rtol=1e-14)
    assert_allclose(simpson(np.exp, 0.0, 1.0), math.e - 1, rtol=1e-10)


def test_simpson_cap():
    with pytest.raises(ConvergenceError):
        simpson(lambda x: np.sin(1e6 * x) * np.sqrt(np.abs(x - 0.3)), 0.0, 1.0, cap=64)


def test_enumeration_published_listings():
    assert enumerate_qstar_indices(0) == ((1, 0),)
    assert set(enumerate_qstar_indices(1)) == {(1, 1), (2, 1)}
    assert set(enumerate_qstar_indices(2)) == {(1, 2), (2, 3), (2, 2), (3, 3)}


@pytest.mark.parametrize("k", range(8))
def test_enumeration_size_and_ranges(k):
    idx = enumerate_qstar_indices(k)
    assert len(idx) == 2**k
    assert all(1 <= m <= k + 1 and 0 <= n <= k * (k + 1) // 2 for m, n in idx)


@pytest.mark.parametrize("k", range(6))
def test_qstar_sum_equals_product_form(k):
    p = ALTAMONT
    total = sum(q_star_quadrature(p, k, m, n) for m, n in enumerate_qstar_indices(k))
    assert_allclose(total, term_t_star(p, k), rtol=1e-9, atol=1e-15)


@pytest.mark.parametrize("I", [1.0, 7.0, 14.0])
@pytest.mark.parametrize("k", [0, 1, 3, 8])
def test_term_matches_scipy_quad(I, k):
    p = ALTAMONT.with_interval(I)
    assert_allclose(term_t_star(p, k), quad_term(p, k), rtol=1e-8)


def test_first_term_altamont():
    assert_allclose(term_t_star(ALTAMONT, 0), 0.1740, atol=5e-4)


def test_alpha1_closed_form():
    for p, k, m, n in random_draws(40, seed=3, alpha=1.0):
        assert_allclose(q_star_closed_alpha1(p, k, m, n), q_star_quadrature(p, k, m, n), rtol=1e-9)


def test_alpha1_printed_form_differs_off_diagonal():
    p = AcmeParams.from_values(1.0, 0.1, 1.0, 0.07, 0.9, 7.0)
    exact = q_star_quadrature(p, 2, 2, 3)
    assert_allclose(q_star_closed_alpha1(p, 2, 2, 2, as_printed=True),
                    q_star_quadrature(p, 2, 2, 2), rtol=1e-9)
    assert abs(q_star_closed_alpha1(p, 2, 2, 3, as_printed=True) / exact - 1) > 1e-3


def test_alpha_half_closed_form():
    for p, k, m, n in random_draws(40, seed=4, alpha=0.5):
        value = q_star_closed_alpha_half(p, k, m, n, check=False)
        assert_allclose(value, q_star_quadrature(p, k, m, n), rtol=1e-8)


def test_alpha_half_printed_form_is_reported():
    p = AcmeParams.from_values(0.5, 0.08, 1.0, 0.07, 0.9, 7.0)
    ref = q_star_quadrature(p, 1, 2, 1)
    with pytest.warns(ClosedFormMismatch):
        value = q_star_closed_alpha_half(p, 1, 2, 1, as_printed=True)
    assert value == ref


def test_alpha_half_requires_b():
    p = AcmeParams.from_values(0.5, 0.08, 1.0, 0.0, 0.9, 7.0)
    with pytest.raises(ValueError):
        q_star_closed_alpha_half(p, 0, 1, 0)


@pytest.mark.parametrize("I", [1.0, 2.0, 7.0, 14.0])
def test_rigorous_bound_dominates_tail(I):
    p = ALTAMONT.with_interval(I)
    ref = reduction_factor(p, n_terms=60).r_star
    for N in range(1, 16):
        tail = ref - reduction_factor(p, n_terms=N).r_star
        assert 0 <= tail <= truncation_bound(p, N, rigorous=True) * (1 + 1e-9)


def test_published_bound_can_undercut_tail():
    # with b > 0 the (1 - e^-a)^N branch is not an upper bound at short intervals
    p = ALTAMONT.with_interval(1.0)
    ref = reduction_factor(p, n_terms=60).r_star
    tail = ref - reduction_factor(p, n_terms=8).r_star
    assert tail > truncation_bound(p, 8)


def test_reduction_converges_to_target():
    rr = reduction_factor(ALTAMONT, target_rel_error=1e-3)
    ref = reduction_factor(ALTAMONT, n_terms=60).r_star
    assert abs(ref - rr.r_star) <= 1e-3 * rr.r_star
    assert rr.truncation_bound <= 1e-3 * rr.r_star
    assert rr.t_star_0 == rr.terms[0]


def test_reduction_fixed_terms_matches_published():
    rr = reduction_factor(ALTAMONT, n_terms=5)
    assert_allclose(rr.r_star, 0.2496, atol=5e-4)
    assert_allclose(rr.multiplier, 4.01, atol=0.02)


def test_reduction_is_fast():
    t = time.perf_counter()
    reduction_factor(ALTAMONT)
    assert time.perf_counter() - t < 1.0


def test_reduction_bad_tolerance():
    with pytest.raises(ValueError):
        reduction_factor(ALTAMONT, target_rel_error=0.0)


def test_no_bleed_reduces_to_first_term():
    p = AcmeParams.from_values(0.4695, 0.0809, 1.0322, 0.0706, 0.0, 7.0)
    rr = reduction_factor(p)
    assert rr.r_star == rr.t_star_0


def test_result_from_values():
    rr = ReductionResult.from_values(0.25, 0.17)
    assert rr.multiplier == 4.0 and rr.n_terms == 1


@pytest.mark.parametrize("bleed", [0.0, 0.5, 1.0])
def test_general_engine_matches_constant_case(bleed):
    s, t_hat, I = 0.6, 12.0, 7.0
    p = AcmeParams.from_values(1.0, 1.0 / t_hat, -math.log(s), 0.0, bleed, I)
    rr = reduction_factor(p, target_rel_error=1e-8, max_terms=200)
    assert_allclose(rr.r_star, reduction_constant_case(s, t_hat, I, bleed), rtol=1e-7)


def test_constant_case_rejects_divergent_bleed():
    with pytest.raises(ValueError):
        reduction_constant_case(0.5, 1.0, 0.1, 5.0)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.3, 3.0), st.floats(0.01, 0.3), st.floats(0.05, 2.0),
       st.floats(0.0, 0.2), st.floats(0.0, 1.0), st.floats(0.5, 21.0))
def test_reduction_bounds_property(alpha, rho, a, b, bleed, I):
    p = AcmeParams.from_values(alpha, rho, a, b, bleed, I)
    try:
        rr = reduction_factor(p, target_rel_error=1e-2)
    except ConvergenceError:
        return
    assert 0 <= rr.t_star_0 <= rr.r_star <= 1
    assert all(t >= 0 for t in rr.terms)


@settings(max_examples=25, deadline=None)
@given(st.floats(0.3, 2.0), st.floats(0.0, 1.0))
def test_reduction_decreases_with_interval(alpha, bleed):
    base = AcmeParams.from_values(alpha, 0.08, 1.0, 0.07, bleed, 2.0)
    r = [reduction_factor(base.with_interval(I), n_terms=40).r_star for I in (2.0, 7.0, 14.0)]
    assert r[0] >= r[1] >= r[2]


def test_closed_form_mismatch_is_a_warning_class():
    assert issubclass(ClosedFormMismatch, UserWarning)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        p = AcmeParams.from_values(0.5, 0.08, 1.0, 0.07, 0.9, 7.0)
        q_star_closed_alpha_half(p, 1, 2, 1)
