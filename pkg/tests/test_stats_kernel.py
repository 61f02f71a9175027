import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose
from scipy import special, stats

from acme.stats_kernel import (
    GammaParams,
    NegBinomialParams,
    binomial_cdf,
    gamma_quantile,
    hyp2f1_terminating,
    log_gamma_fn,
    log_hyp2f1_terminating_positive,
    neg_binomial_pmf,
    neg_binomial_quantile,
    normal_cdf,
    normal_sf,
    reg_gamma_lower,
    reg_gamma_upper,
)


@pytest.mark.parametrize("shape,x", [(0.5, 0.1), (0.5, 3.0), (2.0, 1.0), (10.5, 12.0),
                                     (100.5, 90.0), (3.0, 50.0), (0.01, 1e-3)])
def test_reg_gamma_matches_scipy(shape, x):
    assert_allclose(reg_gamma_lower(shape, x), special.gammainc(shape, x), rtol=1e-12, atol=1e-300)
    assert_allclose(reg_gamma_upper(shape, x), special.gammaincc(shape, x), rtol=1e-11, atol=1e-300)


def test_reg_gamma_edges():
    assert reg_gamma_lower(2.0, 0.0) == 0.0
    assert reg_gamma_upper(2.0, 0.0) == 1.0
    with pytest.raises(ValueError):
        reg_gamma_lower(0.0, 1.0)


def test_log_gamma():
    assert_allclose(log_gamma_fn(0.5), 0.5 * math.log(math.pi), rtol=1e-14)
    with pytest.raises(ValueError):
        log_gamma_fn(-1.0)


@pytest.mark.parametrize("p", [0.05, 0.25, 0.5, 0.9, 0.999])
@pytest.mark.parametrize("shape,rate", [(0.5, 1.747), (10.5, 1.747), (100.5, 6.99), (1.0, 0.01)])
def test_gamma_quantile_matches_scipy(p, shape, rate):
    q = gamma_quantile(p, GammaParams(shape, rate))
    assert_allclose(q, stats.gamma.ppf(p, shape, scale=1 / rate), rtol=1e-9)


@settings(max_examples=60, deadline=None)
@given(st.floats(0.01, 0.99), st.floats(0.2, 200.0), st.floats(0.01, 10.0))
def test_gamma_quantile_inverts_cdf(p, shape, rate):
    q = gamma_quantile(p, GammaParams(shape, rate))
    assert abs(reg_gamma_lower(shape, rate * q) - p) < 1e-9


def test_normal_tails():
    assert_allclose(normal_cdf(1.96), stats.norm.cdf(1.96), rtol=1e-14)
    assert_allclose(normal_sf(8.0), stats.norm.sf(8.0), rtol=1e-12)


@pytest.mark.parametrize("x,n,p", [(0, 4, 0.5), (3, 20, 0.2496), (10, 11, 0.9), (50, 400, 0.25)])
def test_binomial_cdf(x, n, p):
    assert_allclose(binomial_cdf(x, n, p), stats.binom.cdf(x, n, p), rtol=1e-12)


def test_neg_binomial_pmf_matches_scipy():
    nb = NegBinomialParams(5.5, 0.2496)
    j = np.arange(200)
    assert_allclose(neg_binomial_pmf(j, nb), stats.nbinom.pmf(j, 5.5, 0.2496), rtol=1e-11)


@pytest.mark.parametrize("p", [0.5, 0.9, 0.99])
@pytest.mark.parametrize("size,prob", [(0.5, 0.2496), (1.0, 0.2496), (25.5, 0.5), (3.0, 0.01)])
def test_neg_binomial_quantile_matches_scipy(p, size, prob):
    assert neg_binomial_quantile(p, NegBinomialParams(size, prob)) == stats.nbinom.ppf(p, size, prob)


def test_neg_binomial_quantile_degenerate():
    assert neg_binomial_quantile(0.9, NegBinomialParams(3.0, 1.0)) == 0


@pytest.mark.parametrize("C,M,c3,x", [(0, 5, -4.5, -2.0), (3, 7, -9.5, -1.3), (5, 2, -6.5, -0.4),
                                      (4, 4, 2.5, 0.7), (6, 9, 1.5, -3.0)])
def test_hyp2f1_matches_mpmath(C, M, c3, x):
    ref = float(mpmath.hyp2f1(-C, -M, c3, x))
    assert_allclose(hyp2f1_terminating(C, M, c3, x), ref, rtol=1e-12)


def test_hyp2f1_log_positive_regime():
    C, M, xi, z = 40, 300, 0.5, 7.3
    c3 = 1 - xi - C - M
    ref = mpmath.log(mpmath.hyp2f1(-C, -M, c3, -z))
    assert_allclose(log_hyp2f1_terminating_positive(C, M, c3, -z), float(ref), rtol=1e-12)


def test_hyp2f1_zero_pochhammer_raises():
    with pytest.raises(ZeroDivisionError):
        hyp2f1_terminating(3, 3, -1.0, 0.5)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 12), st.integers(0, 12), st.floats(0.1, 5.0), st.floats(0.01, 20.0))
def test_hyp2f1_log_form_agrees(C, M, xi, z):
    c3 = 1 - xi - C - M
    direct = hyp2f1_terminating(C, M, c3, -z)
    assert_allclose(math.exp(log_hyp2f1_terminating_positive(C, M, c3, -z)), direct, rtol=1e-11)


def test_binomial_cdf_exact_ties():
    # P(Bi(2C+1, 1/2) <= C) is exactly one half
    for C in (0, 1, 5, 10, 100):
        assert binomial_cdf(C, 2 * C + 1, 0.5) == 0.5


def test_binomial_cdf_paths_agree():
    from acme.stats_kernel import EXACT_BINOMIAL_MAX_N

    n = EXACT_BINOMIAL_MAX_N
    for m in (n, n + 1):
        assert_allclose(binomial_cdf(110, m, 0.3), stats.binom.cdf(110, m, 0.3), rtol=1e-11)
