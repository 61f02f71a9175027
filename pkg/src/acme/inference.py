"""Point estimates, posteriors and interval estimates for mortality.

Two targets:

* the mean daily mortality ``m``, whose posterior given a count is Gamma;
* the number of fatalities ``M`` in one search period, whose posterior is a
  terminating Gauss hypergeometric series when carcasses can bleed through
  from earlier periods, and negative binomial when they cannot.

The bleed-through posterior treats ``m`` as constant across past periods.
Its derivation splits the count as ``C = C_new + C_old``: ``C_new`` carcasses
that arrived this period and ``C_old`` left over from earlier ones.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import betainc, gammaln

from .reduction import ReductionResult
from .simplex import simplex_minimize
from .stats_kernel import (
    GammaParams,
    NegBinomialParams,
    binomial_cdf,
    gamma_quantile,
    neg_binomial_logpmf,
    neg_binomial_quantile,
    reg_gamma_lower,
)

TAIL_TOL = 1e-10
MASS_TOL = 1e-9
GAP_TOL = 1e-12
SCAN_CAP = 10_000_000
MIN_EB_COUNTS = 5


class PosteriorError(ArithmeticError):
    pass


@dataclass(frozen=True)
class PriorSpec:
    """Gamma(xi, lambda) prior on mean daily mortality (lambda in days)."""

    xi: float = 0.5
    lam: float = 0.0
    kind: str = "objective"
    std_errors: dict | None = field(default=None, compare=False)
    flags: tuple = field(default=(), compare=False)

    def __post_init__(self):
        if self.kind not in ("objective", "empirical"):
            raise ValueError(f"unknown prior kind {self.kind!r}")
        if self.kind == "objective" and (self.xi, self.lam) != (0.5, 0.0):
            raise ValueError("the objective prior is xi = 1/2, lambda = 0")
        if self.kind == "empirical" and not (self.xi > 0 and self.lam > 0):
            raise ValueError("an empirical prior needs xi > 0 and lambda > 0")

    @classmethod
    def objective(cls) -> "PriorSpec":
        return cls()

    @classmethod
    def empirical(cls, xi: float, lam: float, **kw) -> "PriorSpec":
        return cls(xi, lam, "empirical", **kw)

    def as_dict(self) -> dict:
        out = {"kind": self.kind, "xi": self.xi, "lambda": self.lam}
        if self.std_errors is not None:
            out["std_errors"] = dict(self.std_errors)
        if self.flags:
            out["flags"] = list(self.flags)
        return out


@dataclass(frozen=True)
class MortalityPosterior:
    """P[M = k | C] for k = 0..len(pmf)-1.

    ``tail_mass_bound`` bounds the mass beyond the last entry; ``total_mass``
    is the unforced sum of ``pmf``.
    """

    pmf: np.ndarray
    C: int
    mean: float
    tail_mass_bound: float
    total_mass: float
    no_bleed: bool

    @property
    def m_max(self) -> int:
        return len(self.pmf) - 1

    @property
    def support_min(self) -> int:
        return self.C if self.no_bleed else 0

    def cdf(self) -> np.ndarray:
        return np.cumsum(self.pmf)


@dataclass(frozen=True)
class IntervalEstimate:
    lo: float
    hi: float
    gamma: float
    kind: str
    contiguous: bool = True
    members: tuple | None = field(default=None, repr=False)

    def as_dict(self) -> dict:
        out = {"kind": self.kind, "gamma": self.gamma, "lo": self.lo, "hi": self.hi}
        if self.kind == "hpd":
            out["contiguous"] = self.contiguous
        return out


def _check_count(C):
    if int(C) != C or C < 0:
        raise ValueError(f"count must be a nonnegative integer, got {C}")
    return int(C)


def _check_gamma(gamma):
    if not 0 < gamma < 1:
        raise ValueError(f"coverage gamma must lie in (0, 1), got {gamma}")


# --------------------------------------------------------------------------
# mean mortality


def point_estimate(C: int, rr: ReductionResult) -> float:
    """M* = C / R*."""
    if not rr.r_star > 0:
        raise ValueError("R* must be positive")
    return C / rr.r_star


def mean_mortality_posterior(C, rr: ReductionResult, I: float, prior: PriorSpec | None = None) -> GammaParams:
    """Gamma posterior of the mean daily mortality.

    ``C`` may be a single count or a sequence of counts from equal-length
    searches, which pool as (sum of counts, n * I).
    """
    prior = prior or PriorSpec.objective()
    counts = [C] if np.ndim(C) == 0 else list(C)
    if not counts:
        raise ValueError("need at least one count")
    total = sum(_check_count(c) for c in counts)
    return GammaParams(prior.xi + total, prior.lam + rr.r_star * I * len(counts))


def mean_mortality_interval(C, rr: ReductionResult, I: float, prior: PriorSpec | None = None,
                            gamma: float = 0.9, kind: str = "one_sided") -> IntervalEstimate:
    _check_gamma(gamma)
    g = mean_mortality_posterior(C, rr, I, prior)
    if kind == "one_sided":
        return IntervalEstimate(0.0, gamma_quantile(gamma, g), gamma, kind)
    if kind == "symmetric":
        return IntervalEstimate(gamma_quantile((1 - gamma) / 2, g),
                                gamma_quantile((1 + gamma) / 2, g), gamma, kind)
    raise ValueError(f"unknown interval kind {kind!r}")


def gamma_interval_mass(iv: IntervalEstimate, g: GammaParams) -> float:
    return reg_gamma_lower(g.shape, g.rate * iv.hi) - reg_gamma_lower(g.shape, g.rate * iv.lo)


def _nb_count_nllh(counts, xi, lam, rI):
    counts = np.asarray(counts, dtype=float)
    ll = (gammaln(xi + counts) - gammaln(xi) - gammaln(counts + 1)
          + xi * math.log(lam / (lam + rI)) + counts * math.log(rI / (lam + rI)))
    return -float(ll.sum())


def empirical_bayes_fit(counts, rr: ReductionResult, I: float) -> PriorSpec:
    """ML estimates of (xi, lambda) from the negative binomial count marginal.

    Counts without overdispersion (sample variance <= mean, including all
    zeros) have no finite maximum; the objective prior is returned with a
    warning in that case.
    """
    counts = np.asarray(counts, dtype=float)
    if counts.size < MIN_EB_COUNTS:
        raise ValueError(f"empirical Bayes needs at least {MIN_EB_COUNTS} counts")
    if np.any(counts < 0) or np.any(counts != np.round(counts)):
        raise ValueError("counts must be nonnegative integers")
    rI = rr.r_star * I
    mean, var = counts.mean(), counts.var(ddof=1)
    if mean == 0 or var <= mean:
        warnings.warn("counts show no overdispersion; using the objective prior",
                      RuntimeWarning, stacklevel=2)
        return PriorSpec(flags=("eb_boundary", "fallback_objective"))
    # method-of-moments start: mean = xi rI / lam, var = mean (1 + rI / lam)
    lam0 = rI * mean / (var - mean)
    xi0 = mean * lam0 / rI

    def obj(th):
        return _nb_count_nllh(counts, math.exp(th[0]), math.exp(th[1]), rI)

    res = simplex_minimize(obj, [math.log(xi0), math.log(lam0)], scale=0.5)
    xi, lam = math.exp(res.x[0]), math.exp(res.x[1])
    flags = [] if res.converged else ["not_converged"]
    ses = {}
    h = 1e-4
    H = np.empty((2, 2))
    f0 = obj(res.x)
    for i in range(2):
        for j in range(2):
            ei, ej = np.eye(2)[i] * h, np.eye(2)[j] * h
            if i == j:
                H[i, i] = (obj(res.x + ei) - 2 * f0 + obj(res.x - ei)) / h**2
            else:
                H[i, j] = (obj(res.x + ei + ej) - obj(res.x + ei - ej)
                           - obj(res.x - ei + ej) + obj(res.x - ei - ej)) / (4 * h**2)
    try:
        np.linalg.cholesky(H)
        cov = np.linalg.inv(H)
        ses = {"xi": xi * math.sqrt(cov[0, 0]), "lambda": lam * math.sqrt(cov[1, 1])}
    except np.linalg.LinAlgError:
        flags.append("singular_hessian")
    return PriorSpec.empirical(xi, lam, std_errors=ses, flags=tuple(flags))


# --------------------------------------------------------------------------
# per-period mortality


def _nb_sf(k, size, prob):
    """P[Y > k] for Y ~ NB(size, prob)."""
    if k < 0:
        return 1.0
    if prob >= 1.0:
        return 0.0
    return float(betainc(k + 1.0, size, 1.0 - prob))


def _grow_support(start, C, size, prob):
    m_max = max(int(math.ceil(start)), C + 1)
    while True:
        bound = _nb_sf(m_max - C, size, prob)
        if bound <= TAIL_TOL:
            return m_max, bound
        if m_max > SCAN_CAP:
            raise PosteriorError("posterior support exceeds the scan cap")
        m_max *= 2


def _finish(logpmf, C, tail, no_bleed):
    pmf = np.exp(logpmf)
    total = math.fsum(pmf)
    if not (1.0 - MASS_TOL - tail <= total <= 1.0 + MASS_TOL):
        raise PosteriorError(f"posterior mass {total!r} is not within {MASS_TOL} of 1")
    mean = math.fsum(np.arange(pmf.size) * pmf) / total
    return MortalityPosterior(pmf, C, mean, tail, total, no_bleed)


def no_bleed_posterior(C: int, rr: ReductionResult, I: float, prior: PriorSpec | None = None) -> MortalityPosterior:
    """Posterior of M when only this period's carcasses can be found.

    M - C ~ NB(xi + C, (lambda + R* I) / (lambda + I)); for the objective
    prior NB(C + 1/2, R*).
    """
    C = _check_count(C)
    prior = prior or PriorSpec.objective()
    R = rr.r_star
    if not 0 < R <= 1:
        raise ValueError("R* must lie in (0, 1]")
    prob = R if prior.kind == "objective" else (prior.lam + R * I) / (prior.lam + I)
    size = prior.xi + C
    if prob >= 1.0:
        pmf = np.zeros(C + 1)
        pmf[C] = 1.0
        return MortalityPosterior(pmf, C, float(C), 0.0, 1.0, True)
    m_max, tail = _grow_support(8.0 * (C + 1) / R, C, size, prob)
    logpmf = np.full(m_max + 1, -np.inf)
    logpmf[C:] = neg_binomial_logpmf(np.arange(m_max - C + 1), NegBinomialParams(size, prob))
    return _finish(logpmf, C, tail, True)


def _log_c_z(C, M, R, T0, I, prior):
    gap = R - T0
    xi = prior.xi
    if prior.kind == "objective":
        # lambda = 0: every factor of I cancels
        log_c = (gammaln(0.5 + C + M) + 0.5 * math.log(R) + C * math.log(gap)
                 + M * math.log1p(-T0) - math.lgamma(0.5 + C) - gammaln(M + 1.0)
                 - (0.5 + C + M) * math.log(gap + 1.0))
        log_z = math.log(T0) + math.log(gap + 1.0) - math.log1p(-T0) - math.log(gap) if T0 > 0 else -math.inf
        return log_c, log_z
    lam = prior.lam
    big = lam + (gap + 1.0) * I
    log_c = (gammaln(xi + C + M) + (xi + C) * math.log(lam + R * I) + C * math.log(gap)
             + M * (math.log1p(-T0) + math.log(I)) - math.lgamma(xi + C) - gammaln(M + 1.0)
             - C * math.log(R) - (xi + C + M) * math.log(big))
    log_z = (math.log(T0) + math.log(big) - math.log1p(-T0) - math.log(gap) - math.log(I)
             if T0 > 0 else -math.inf)
    return log_c, log_z


def log_hyp2f1_series(C: int, M: np.ndarray, xi: float, log_z: float) -> np.ndarray:
    """log 2F1(-C, -M; 1 - xi - C - M; -z) for an array of M.

    Every term of this series is nonnegative, so it is accumulated in log
    space: term x+1 / term x = (C - x)(M - x) z / ((xi + C + M - x - 1)(x + 1)).
    """
    M = np.asarray(M, dtype=float)
    acc = np.zeros_like(M)
    term = np.zeros_like(M)
    if log_z == -math.inf:
        return acc
    for x in range(C):
        live = M > x
        with np.errstate(divide="ignore", invalid="ignore"):
            step = (math.log(C - x) + np.log(np.where(live, M - x, 1.0)) + log_z
                    - np.log(xi + C + M - x - 1.0) - math.log(x + 1))
        term = np.where(live, term + step, -np.inf)
        acc = np.logaddexp(acc, term)
    return acc


def mortality_posterior_pmf(C: int, rr: ReductionResult, I: float,
                            prior: PriorSpec | None = None) -> MortalityPosterior:
    """Posterior pmf of M given C when earlier carcasses may still be found.

    pmf(M) = c * 2F1(-C, -M; 1 - xi - C - M; -z), with (c, z) built from R*,
    T*_0, I and the prior (I drops out for the objective prior).  Support is
    truncated where a negative binomial bound on the remaining mass falls
    below 1e-10: given C, M <= C + U with U ~ NB(xi + C, (lambda + R* I) /
    (lambda + R* I + (1 - T*_0) I)).  When R* - T*_0 < 1e-12 the no-bleed
    posterior is returned instead.
    """
    C = _check_count(C)
    prior = prior or PriorSpec.objective()
    R, T0 = rr.r_star, rr.t_star_0
    if not (0 < R <= 1 and 0 <= T0 <= R):
        raise ValueError("need 0 <= T*_0 <= R* <= 1 and R* > 0")
    if R - T0 < GAP_TOL:
        return no_bleed_posterior(C, rr, I, prior)
    if T0 >= 1.0:
        raise ValueError("T*_0 = 1 leaves no carcasses for later searches")
    if prior.kind == "objective":
        prob = R / (R + 1.0 - T0)
    else:
        prob = (prior.lam + R * I) / (prior.lam + R * I + (1.0 - T0) * I)
    m_max, tail = _grow_support(8.0 * (C + 1) / R, C, prior.xi + C, prob)
    M = np.arange(m_max + 1, dtype=float)
    log_c, log_z = _log_c_z(C, M, R, T0, I, prior)
    logpmf = log_c + log_hyp2f1_series(C, M, prior.xi, log_z)
    return _finish(logpmf, C, tail, False)


def posterior_for(C: int, rr: ReductionResult, I: float, prior: PriorSpec | None = None) -> MortalityPosterior:
    """Dispatch to the bleed-through or no-bleed posterior."""
    if rr.r_star - rr.t_star_0 < GAP_TOL:
        return no_bleed_posterior(C, rr, I, prior)
    return mortality_posterior_pmf(C, rr, I, prior)


def hpd_set(pmf: np.ndarray, gamma: float) -> np.ndarray:
    """Smallest set of support points whose mass reaches gamma (sorted)."""
    order = np.argsort(-pmf, kind="stable")
    cum = np.cumsum(pmf[order])
    hit = np.flatnonzero(cum >= gamma)
    if not hit.size:
        raise PosteriorError(f"coverage {gamma} is unreachable within the truncated support")
    return np.sort(order[: hit[0] + 1])


def mortality_interval(post: MortalityPosterior, gamma: float = 0.9,
                       kind: str = "one_sided") -> IntervalEstimate:
    """Credible interval for M from cumulative sums of the posterior pmf.

    one_sided: [support min, min{M : F(M) >= gamma}]
    symmetric: [max{M : F(M) <= (1 - gamma)/2}, min{M : F(M) >= (1 + gamma)/2}],
        with the lower end raised to the support minimum when no M qualifies
    hpd: hull of the smallest high-probability set, flagged if it has gaps
    """
    _check_gamma(gamma)
    cdf = post.cdf()

    def upper(level):
        hit = np.flatnonzero(cdf >= level)
        if not hit.size:
            raise PosteriorError(f"coverage {level} is unreachable within the truncated support")
        return int(hit[0])

    lo_min = post.support_min
    if kind == "one_sided":
        return IntervalEstimate(lo_min, upper(gamma), gamma, kind)
    if kind == "symmetric":
        below = np.flatnonzero(cdf <= (1.0 - gamma) / 2.0)
        lo = max(int(below[-1]), lo_min) if below.size else lo_min
        return IntervalEstimate(lo, upper((1.0 + gamma) / 2.0), gamma, kind)
    if kind == "hpd":
        members = hpd_set(post.pmf, gamma)
        lo, hi = int(members[0]), int(members[-1])
        contiguous = members.size == hi - lo + 1
        return IntervalEstimate(lo, hi, gamma, kind, contiguous, tuple(int(m) for m in members))
    raise ValueError(f"unknown interval kind {kind!r}")


def uniform_prior_interval(C: int, rr: ReductionResult, gamma: float = 0.9) -> IntervalEstimate:
    """[C, C + qnbinom(gamma, C + 1, R*)] under a flat prior on M (no bleed-through)."""
    C = _check_count(C)
    _check_gamma(gamma)
    hi = C + neg_binomial_quantile(gamma, NegBinomialParams(C + 1.0, rr.r_star))
    return IntervalEstimate(C, hi, gamma, "uniform_prior")


def classical_binomial_interval(C: int, rr: ReductionResult, gamma: float = 0.9) -> IntervalEstimate:
    """[C, inf{M >= C : P[Bi(M, R*) <= C] <= 1 - gamma}] (no bleed-through).

    The binomial CDF at C decreases in M, so the end point is found by
    doubling then bisection.  R* = 1 is treated as perfect detection, [C, C].
    """
    C = _check_count(C)
    _check_gamma(gamma)
    R = rr.r_star
    if not 0 < R <= 1:
        raise ValueError("R* must lie in (0, 1]")
    if R == 1.0:
        return IntervalEstimate(C, C, gamma, "classical")
    level = 1.0 - gamma

    def ok(M):
        return binomial_cdf(C, M, R) <= level

    if ok(C):
        return IntervalEstimate(C, C, gamma, "classical")
    lo, step = C, 1
    while not ok(lo + step):
        lo += step
        step *= 2
        if lo > SCAN_CAP:
            raise PosteriorError("classical interval scan exceeded the cap")
    hi = lo + step
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return IntervalEstimate(C, hi, gamma, "classical")
