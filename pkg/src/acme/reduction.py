"""Carcass persistence, searcher proficiency and the reduction factor R*.

The reduction factor is the expected fraction of carcasses arriving during a
search interval that are ever counted.  With equal search intervals ``I`` it
is a series ``R* = sum_k T*_k`` where ``T*_k`` is the fraction that arrived
``k`` intervals back, were missed ``k`` times while remaining discoverable,
and are found now.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.special import erfcx

from .stats_kernel import normal_cdf

SIMPSON_START = 32
SIMPSON_CAP = 2**20
SIMPSON_RTOL = 1e-10
MAX_TERMS = 50
MAX_ENUM_LEVEL = 22


class ConvergenceError(RuntimeError):
    pass


class ClosedFormMismatch(UserWarning):
    """A closed-form Q* disagreed with quadrature; the quadrature value was used."""


@dataclass(frozen=True)
class RemovalModel:
    """Weibull persistence: P[tau > t] = exp(-(rho t)^alpha)."""

    alpha: float
    rho: float

    def __post_init__(self):
        if not (self.alpha > 0 and self.rho > 0):
            raise ValueError(f"alpha and rho must be positive, got {self.alpha}, {self.rho}")


@dataclass(frozen=True)
class DiscoveryModel:
    """Searcher proficiency S(t) = exp(-a - b t) for a carcass of age t."""

    a: float
    b: float

    def __post_init__(self):
        if not (self.a >= 0 and self.b >= 0):
            raise ValueError(f"a and b must be nonnegative, got {self.a}, {self.b}")


@dataclass(frozen=True)
class AcmeParams:
    removal: RemovalModel
    discovery: DiscoveryModel
    bleed: float
    interval: float

    def __post_init__(self):
        if not 0 <= self.bleed <= 1:
            raise ValueError(f"bleed-through must lie in [0, 1], got {self.bleed}")
        if not self.interval > 0:
            raise ValueError(f"search interval must be positive, got {self.interval}")

    @classmethod
    def from_values(cls, alpha, rho, a, b, bleed, interval) -> "AcmeParams":
        return cls(RemovalModel(alpha, rho), DiscoveryModel(a, b), bleed, interval)

    def with_interval(self, interval: float) -> "AcmeParams":
        return AcmeParams(self.removal, self.discovery, self.bleed, interval)

    def as_dict(self) -> dict:
        return {
            "alpha": self.removal.alpha,
            "rho": self.removal.rho,
            "a": self.discovery.a,
            "b": self.discovery.b,
            "bleed": self.bleed,
            "interval": self.interval,
        }


# Fitted brown-headed cowbird values from the Altamont integrated detection trial.
ALTAMONT = AcmeParams.from_values(0.4695, 0.0809, 1.0322, 0.0706, 0.9573, 7.0)


@dataclass(frozen=True)
class ReductionResult:
    r_star: float
    t_star_0: float
    terms: tuple = field(default_factory=tuple)
    n_terms: int = 0
    truncation_bound: float = 0.0

    @property
    def multiplier(self) -> float:
        return 1.0 / self.r_star

    @classmethod
    def from_values(cls, r_star: float, t_star_0: float) -> "ReductionResult":
        """Wrap externally supplied (R*, T*_0), e.g. from a report file."""
        return cls(r_star, t_star_0, (t_star_0,), 1, 0.0)


def _check_time(t):
    if np.any(np.asarray(t) < 0):
        raise ValueError("times must be nonnegative")


def survival(rm: RemovalModel, t):
    _check_time(t)
    return np.exp(-np.power(rm.rho * np.asarray(t, dtype=float), rm.alpha))


def mean_persistence(rm: RemovalModel) -> float:
    return math.gamma(1.0 + 1.0 / rm.alpha) / rm.rho


def proficiency(dm: DiscoveryModel, t):
    _check_time(t)
    return np.exp(-dm.a - dm.b * np.asarray(t, dtype=float))


def simpson(f, lo: float, hi: float, rtol: float = SIMPSON_RTOL,
            start: int = SIMPSON_START, cap: int = SIMPSON_CAP) -> float:
    """Composite Simpson rule with panel doubling.

    ``f`` must accept a numpy array.  Panels double (reusing earlier nodes)
    until successive estimates agree to ``rtol`` relative.
    """
    n = start
    x = np.linspace(lo, hi, n + 1)
    y = f(x)
    ends = y[0] + y[-1]
    odd = y[1:-1:2].sum()
    even = y[2:-1:2].sum()
    h = (hi - lo) / n
    est = h / 3.0 * (ends + 4.0 * odd + 2.0 * even)
    while n < cap:
        n *= 2
        h = (hi - lo) / n
        even += odd
        odd = f(lo + h * np.arange(1, n, 2)).sum()
        new = h / 3.0 * (ends + 4.0 * odd + 2.0 * even)
        if abs(new - est) <= rtol * abs(new) or new == est:
            return float(new)
        est = new
    raise ConvergenceError(f"Simpson rule did not converge within {cap} panels")


def _origin_power(alpha: float) -> int:
    # x = u**q turns the x**alpha cusp at the origin into u**(q*alpha), q*alpha >= 4
    if alpha >= 4 or float(alpha).is_integer():
        return 1
    return math.ceil(4.0 / alpha)


def _integrate_unit(g, k: int, alpha: float) -> float:
    """Integrate g over [0, 1]; smooths the k = 0 survival cusp first."""
    q = _origin_power(alpha) if k == 0 else 1
    if q == 1:
        return simpson(g, 0.0, 1.0)
    return simpson(lambda u: g(u**q) * q * u ** (q - 1), 0.0, 1.0)


@lru_cache(maxsize=None)
def enumerate_qstar_indices(k: int) -> tuple:
    """The (m, n) index pairs whose Q*_{kmn} sum to T*_k, in recursion order."""
    if k < 0:
        raise ValueError("k must be nonnegative")
    if k > MAX_ENUM_LEVEL:
        raise MemoryError(f"2**{k} index pairs exceeds the enumeration cap")
    level = [(1, 0)]
    for j in range(k):
        level = [pair for m, n in level for pair in ((m, n + 1), (m + 1, n + j + 1))]
    return tuple(level)


def q_star_quadrature(p: AcmeParams, k: int, m: int, n: int) -> float:
    if k < 0 or m < 1 or n < 0:
        raise ValueError("need k >= 0, m >= 1, n >= 0")
    if k >= 1 and p.bleed == 0:
        return 0.0
    I = p.interval
    rm, dm = p.removal, p.discovery
    bI = dm.b * I

    def g(x):
        return np.exp(-np.power(rm.rho * (k + x) * I, rm.alpha) - m * (dm.a + bI * x) - n * bI)

    return p.bleed**k * (-1) ** (m + 1) * _integrate_unit(g, k, rm.alpha)


def q_star_closed_alpha1(p: AcmeParams, k: int, m: int, n: int, as_printed: bool = False) -> float:
    """Q*_{kmn} in closed form for exponential persistence.

    The default integrates the definition exactly, giving the factor
    exp(-m a - n b I).  ``as_printed=True`` uses exp(-m (a + b I)) instead,
    which only coincides when m == n.
    """
    if p.removal.alpha != 1:
        raise ValueError("closed form requires alpha == 1")
    rho, a, b, I, beta = p.removal.rho, p.discovery.a, p.discovery.b, p.interval, p.bleed
    if k >= 1 and beta == 0:
        return 0.0
    lam = (rho + m * b) * I
    head = -m * (a + b * I) if as_printed else -m * a - n * b * I
    sign = (-1) ** (m + 1)
    return sign * math.exp(head) * (-math.expm1(-lam)) / lam * (beta * math.exp(-rho * I)) ** k


def _q_half_exact(p: AcmeParams, k: int, m: int, n: int) -> float:
    rho, a, b, I, beta = p.removal.rho, p.discovery.a, p.discovery.b, p.interval, p.bleed
    Bp = m * b / rho
    c = 1.0 / (2.0 * Bp)
    s = math.sqrt(2.0 * Bp)
    v_lo, v_hi = math.sqrt(rho * k * I), math.sqrt(rho * (k + 1) * I)

    def piece(v):
        # exp(-B' v^2 - v) * [c - c sqrt(pi/B') e^{z^2/2} Phi_c(z)], z = s (v + c)
        z = s * (v + c)
        tail = 0.5 * erfcx(z / math.sqrt(2.0))
        return math.exp(-Bp * v * v - v) * c * (1.0 - math.sqrt(math.pi / Bp) * tail)

    J = (2.0 / rho) * (piece(v_lo) - piece(v_hi))
    pref = beta**k * (-1) ** (m + 1) / I * math.exp(-m * a - n * b * I + m * b * k * I)
    return pref * J


def _q_half_printed(p: AcmeParams, k: int, m: int, n: int) -> float:
    rho, a, b, I, beta = p.removal.rho, p.discovery.a, p.discovery.b, p.interval, p.bleed
    mb = m * b
    c = rho / (2 * mb)
    w_lo, w_hi = math.sqrt(k * I * rho) + c, math.sqrt((k + 1) * I * rho) + c
    pref = 2 * beta**k * (-1) ** (m + 1) / (rho * I) * math.exp(-m * a + (m * k - n) * b * I + rho / (4 * mb))
    arg = math.sqrt(2 * mb / rho)
    braces = (c * (math.exp(-mb * w_lo**2) - math.exp(-mb * w_hi**2))
              + 2 * math.sqrt(math.pi * rho / mb) * (normal_cdf(arg * w_lo) - normal_cdf(arg * w_hi)))
    return pref * braces


def q_star_closed_alpha_half(p: AcmeParams, k: int, m: int, n: int,
                             as_printed: bool = False, check: bool = True,
                             rtol: float = 1e-6) -> float:
    """Q*_{kmn} in closed form for Weibull shape 1/2 (needs b > 0).

    With ``check`` the closed form is compared with quadrature; on a relative
    discrepancy above ``rtol`` a :class:`ClosedFormMismatch` warning is issued
    and the quadrature value is returned.  ``as_printed`` selects the
    published display verbatim rather than the re-derived expression.
    """
    if p.removal.alpha != 0.5:
        raise ValueError("closed form requires alpha == 0.5")
    if not p.discovery.b > 0:
        raise ValueError("closed form requires b > 0")
    if k >= 1 and p.bleed == 0:
        return 0.0
    try:
        value = (_q_half_printed if as_printed else _q_half_exact)(p, k, m, n)
    except (OverflowError, ZeroDivisionError):
        value = math.nan
    if not check:
        return value
    ref = q_star_quadrature(p, k, m, n)
    if not abs(value - ref) <= rtol * abs(ref):
        warnings.warn(
            f"alpha=1/2 closed form gave {value!r}, quadrature {ref!r} at (k,m,n)=({k},{m},{n})",
            ClosedFormMismatch,
            stacklevel=2,
        )
        return ref
    return value


def term_t_star(p: AcmeParams, k: int) -> float:
    """T*_k by direct quadrature of its product-form integrand."""
    if k < 0:
        raise ValueError("k must be nonnegative")
    if k >= 1 and (p.bleed == 0 or p.discovery.a == 0):
        return 0.0
    I = p.interval
    rm, dm = p.removal, p.discovery
    bI = dm.b * I
    lags = np.arange(k)[:, None]

    def g(u):
        x = k + u
        val = np.exp(-np.power(rm.rho * x * I, rm.alpha) - dm.a - x * bI)
        if k:
            # factors 1 - S at the k earlier searches, ages u*I, (u+1)*I, ...
            val = val * np.prod(-np.expm1(-dm.a - (u + lags) * bI), axis=0)
        return val

    return p.bleed**k * _integrate_unit(g, k, rm.alpha)


def truncation_bound(p: AcmeParams, N: int, rigorous: bool = False) -> float:
    """Upper bound on the series tail sum_{k >= N} T*_k.

    By default the published expression, whose second branch uses
    (1 - e^-a)^N.  That branch is a lower bound on the miss probabilities
    when b > 0, so it can undercut the true tail.  ``rigorous=True`` uses
    prod_{j=1..N} (1 - e^{-a - j b I}) instead, each miss probability taken at
    its largest carcass age, times min(1, first branch); for b == 0 it is never
    looser than the published value.
    """
    if N < 1:
        raise ValueError("N must be at least 1")
    beta, I = p.bleed, p.interval
    a, b = p.discovery.a, p.discovery.b
    if beta == 0 or a == 0:
        return 0.0
    lead = beta**N * float(survival(p.removal, N * I))
    denom = max(b * I, 1.0 - beta * math.exp(-b * I))
    geometric = math.exp(-a - N * b * I) / denom if denom > 0 else math.inf
    if rigorous:
        misses = math.prod(-math.expm1(-a - j * b * I) for j in range(1, N + 1))
        return lead * misses * min(1.0, geometric)
    return lead * min(geometric, (-math.expm1(-a)) ** N)


def reduction_factor(p: AcmeParams, target_rel_error: float = 1e-3,
                     n_terms: int | None = None, max_terms: int = MAX_TERMS) -> ReductionResult:
    """R* = sum_k T*_k, with its leading term T*_0.

    Terms accumulate until the rigorous tail bound falls below
    ``target_rel_error`` times the running sum.  Passing ``n_terms`` instead
    sums exactly that many terms (a fixed-length approximation); the reported
    bound then refers to that truncation.
    """
    if n_terms is None and not 0 < target_rel_error <= 0.1:
        raise ValueError("target_rel_error must lie in (0, 0.1]")
    terms = []
    total = 0.0
    limit = n_terms if n_terms is not None else max_terms
    for k in range(limit):
        t = term_t_star(p, k)
        terms.append(t)
        total += t
        bound = truncation_bound(p, k + 1, rigorous=True)
        if n_terms is None and bound <= target_rel_error * total:
            break
    else:
        if n_terms is None:
            raise ConvergenceError(
                f"reduction series not within {target_rel_error} after {max_terms} terms "
                f"(bound {bound:.3g}, sum {total:.3g})"
            )
    return ReductionResult(
        r_star=total,
        t_star_0=terms[0],
        terms=tuple(terms),
        n_terms=len(terms),
        truncation_bound=bound,
    )


def reduction_constant_case(s: float, t_hat: float, I: float, bleed: float) -> float:
    """Closed-form R* for exponential persistence and constant proficiency."""
    if not (0 < s <= 1 and t_hat > 0 and I > 0 and bleed >= 0):
        raise ValueError("need 0 < s <= 1, t_hat > 0, I > 0, bleed >= 0")
    growth = math.exp(I / t_hat)
    if bleed * (1.0 - s) >= growth:
        raise ValueError("bleed-through too large: geometric series diverges")
    return s * t_hat * math.expm1(I / t_hat) / (I * (growth - bleed * (1.0 - s)))
