"""Special functions and distribution primitives.

All functions are pure. Scalar routines use ``math`` only; the pmf helpers
are vectorised over numpy arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy.special import gammaln

_EPS = 1e-16
_TINY = 1e-300
NB_TERM_CAP = 10_000_000


@dataclass(frozen=True)
class GammaParams:
    """Gamma distribution in shape/rate form (rate in 1/day)."""

    shape: float
    rate: float

    def __post_init__(self):
        if not self.shape > 0:
            raise ValueError(f"gamma shape must be positive, got {self.shape}")
        if not self.rate >= 0:
            raise ValueError(f"gamma rate must be nonnegative, got {self.rate}")

    @property
    def mean(self) -> float:
        return self.shape / self.rate


@dataclass(frozen=True)
class NegBinomialParams:
    """Negative binomial with R's (size, prob) parametrisation."""

    size: float
    prob: float

    def __post_init__(self):
        if not self.size > 0:
            raise ValueError(f"size must be positive, got {self.size}")
        if not 0 < self.prob <= 1:
            raise ValueError(f"prob must lie in (0, 1], got {self.prob}")


def log_gamma_fn(x: float) -> float:
    if not x > 0:
        raise ValueError(f"log_gamma_fn requires x > 0, got {x}")
    return math.lgamma(x)


def _gamma_series(a: float, x: float) -> float:
    # P(a, x) by the power series; good for x < a + 1
    term = 1.0 / a
    total = term
    ap = a
    for _ in range(100_000):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * _EPS:
            break
    return total * math.exp(-x + a * math.log(x) - math.lgamma(a))


def _gamma_contfrac(a: float, x: float) -> float:
    # Q(a, x) by modified Lentz on the Legendre continued fraction; x >= a + 1
    b = x + 1.0 - a
    c = 1.0 / _TINY
    d = 1.0 / b
    h = d
    for i in range(1, 100_000):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _TINY:
            d = _TINY
        c = b + an / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            break
    return math.exp(-x + a * math.log(x) - math.lgamma(a)) * h


def reg_gamma_lower(shape: float, x: float) -> float:
    """Regularised lower incomplete gamma function P(shape, x)."""
    if not shape > 0:
        raise ValueError(f"shape must be positive, got {shape}")
    if x < 0:
        raise ValueError(f"x must be nonnegative, got {x}")
    if x == 0:
        return 0.0
    if math.isinf(x):
        return 1.0
    if x < shape + 1.0:
        return min(1.0, _gamma_series(shape, x))
    return max(0.0, 1.0 - _gamma_contfrac(shape, x))


def reg_gamma_upper(shape: float, x: float) -> float:
    """Complement Q(shape, x) = 1 - P(shape, x), accurate in the upper tail."""
    if x < shape + 1.0:
        return 1.0 - reg_gamma_lower(shape, x)
    return _gamma_contfrac(shape, x)


def gamma_quantile(p: float, g: GammaParams) -> float:
    """Quantile of Gamma(shape, rate): smallest x with P(shape, rate*x) >= p.

    Bisection on a bracket, accelerated with Newton steps whenever they stay
    inside the bracket; converges to 1e-12 in CDF space.
    """
    if not 0 <= p < 1:
        raise ValueError(f"p must lie in [0, 1), got {p}")
    if not g.rate > 0:
        raise ValueError("gamma_quantile needs a proper prior (rate > 0)")
    if p == 0:
        return 0.0
    a = g.shape
    lo, hi = 0.0, max(1.0, a)
    while reg_gamma_lower(a, hi) < p:
        lo, hi = hi, 2.0 * hi
    x = 0.5 * (lo + hi)
    for _ in range(500):
        f = reg_gamma_lower(a, x) - p
        if abs(f) <= 1e-13:
            break
        if f < 0:
            lo = x
        else:
            hi = x
        dens = math.exp((a - 1.0) * math.log(x) - x - math.lgamma(a)) if x > 0 else 0.0
        step = x - f / dens if dens > 0 else None
        x = step if step is not None and lo < step < hi else 0.5 * (lo + hi)
        if hi - lo <= 4 * _EPS * hi:
            break
    return x / g.rate


def normal_cdf(z: float) -> float:
    return 0.5 * math.erfc(-z / math.sqrt(2.0))


def normal_sf(z: float) -> float:
    return 0.5 * math.erfc(z / math.sqrt(2.0))


def _log_binom_pmf(j: int, n: int, p: float) -> float:
    if p == 0.0:
        return 0.0 if j == 0 else -math.inf
    if p == 1.0:
        return 0.0 if j == n else -math.inf
    return (math.lgamma(n + 1) - math.lgamma(j + 1) - math.lgamma(n - j + 1)
            + j * math.log(p) + (n - j) * math.log1p(-p))


EXACT_BINOMIAL_MAX_N = 400


def binomial_cdf(x: int, n: int, p: float) -> float:
    """P(X <= x) for X ~ Binomial(n, p), summed in log space."""
    if n < 0 or x < 0:
        raise ValueError("binomial_cdf needs nonnegative x and n")
    if x > n:
        raise ValueError(f"x={x} exceeds n={n}")
    if not 0 <= p <= 1:
        raise ValueError(f"p must lie in [0, 1], got {p}")
    if x == n:
        return 1.0
    if n <= EXACT_BINOMIAL_MAX_N:
        # exact rational sum, so ties such as P = 0.5 compare correctly
        fp = Fraction(p)
        fq = 1 - fp
        total = sum(math.comb(n, j) * fp**j * fq ** (n - j) for j in range(x + 1))
        return float(total)
    logs = [_log_binom_pmf(j, n, p) for j in range(x + 1)]
    top = max(logs)
    if top == -math.inf:
        return 0.0
    return min(1.0, math.exp(top) * math.fsum(math.exp(v - top) for v in logs))


def neg_binomial_logpmf(j, nb: NegBinomialParams):
    """Log pmf of NB(size, prob) at integer(s) ``j`` (vectorised)."""
    j = np.asarray(j, dtype=float)
    if nb.prob == 1.0:
        return np.where(j == 0, 0.0, -np.inf)
    return (gammaln(nb.size + j) - gammaln(nb.size) - gammaln(j + 1.0)
            + nb.size * math.log(nb.prob) + j * math.log1p(-nb.prob))


def neg_binomial_pmf(j, nb: NegBinomialParams):
    return np.exp(neg_binomial_logpmf(j, nb))


def neg_binomial_quantile(p: float, nb: NegBinomialParams, cap: int = NB_TERM_CAP) -> int:
    """Smallest integer q with NB CDF(q) >= p."""
    if not 0 <= p < 1:
        raise ValueError(f"p must lie in [0, 1), got {p}")
    if p == 0 or nb.prob == 1.0:
        return 0
    total = 0.0
    start = 0
    block = 1024
    while start < cap:
        stop = min(start + block, cap)
        cdf = total + np.cumsum(neg_binomial_pmf(np.arange(start, stop), nb))
        hit = np.flatnonzero(cdf >= p)
        if hit.size:
            return int(start + hit[0])
        total = float(cdf[-1])
        start = stop
        block *= 2
    raise RuntimeError(f"negative binomial quantile not reached within {cap} terms")


def hyp2f1_terminating(C: int, M: int, c3: float, x: float) -> float:
    """Terminating Gauss series 2F1(-C, -M; c3; x).

    Sums the min(C, M) + 1 nonzero terms, carrying log-magnitudes and signs so
    that large C + M neither overflows nor loses the small terms.
    """
    if C < 0 or M < 0:
        raise ValueError("C and M must be nonnegative integers")
    K = min(C, M)
    log_mag = [0.0]
    signs = [1.0]
    lm, sg = 0.0, 1.0
    for k in range(K):
        den = c3 + k
        if den == 0.0:
            raise ZeroDivisionError(f"(c3)_k vanishes at k={k + 1} for c3={c3}")
        ratio = (k - C) * (k - M) * x / (den * (k + 1))
        if ratio == 0.0:
            break
        lm += math.log(abs(ratio))
        sg *= math.copysign(1.0, ratio)
        log_mag.append(lm)
        signs.append(sg)
    top = max(log_mag)
    total = math.fsum(s * math.exp(v - top) for s, v in zip(signs, log_mag))
    return total * math.exp(top)


def log_hyp2f1_terminating_positive(C: int, M: int, c3: float, x: float) -> float:
    """Log of the terminating series when every term is nonnegative.

    This is the regime of the mortality posterior (c3 < 0, x < 0) where the
    value itself can overflow a double.
    """
    K = min(C, M)
    lm = 0.0
    logs = [0.0]
    for k in range(K):
        ratio = (k - C) * (k - M) * x / ((c3 + k) * (k + 1))
        if ratio < 0:
            raise ValueError("series has a negative term; use hyp2f1_terminating")
        if ratio == 0:
            break
        lm += math.log(ratio)
        logs.append(lm)
    top = max(logs)
    return top + math.log(math.fsum(math.exp(v - top) for v in logs))
