"""Regression corpus: pinned cases from ``data/golden_cases.csv`` and a micro-benchmark.

Each row names a case and a quantity; :data:`CASES` maps that pair to a
function computing the actual value.  A case passes when
``|actual - expected| <= tolerance``.  Failures are returned, not raised.
"""

from __future__ import annotations

import csv
import io
import math
import time
import warnings
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources

import numpy as np

from . import inference as inf
from .idt_data import simulate_idt
from .legacy import ConstantCaseParams, compare_all, erickson, huso, pollock, shoemaker
from .mle_fit import chi2_sf, fit_removal
from .reduction import (
    ALTAMONT,
    AcmeParams,
    ClosedFormMismatch,
    ReductionResult,
    enumerate_qstar_indices,
    mean_persistence,
    proficiency,
    q_star_closed_alpha1,
    q_star_closed_alpha_half,
    q_star_quadrature,
    reduction_constant_case,
    reduction_factor,
    truncation_bound,
)
from .stats_kernel import NegBinomialParams, neg_binomial_quantile

# the published reduction values are five-term partial sums
PUBLISHED_TERMS = 5
GRID_S = tuple(round(0.1 * i, 1) for i in range(1, 10))
GRID_RATIO = (0.1, 0.25, 0.5, 1.0, 1.5, 2.0, 3.0, 4.0, 6.0, 10.0)


@dataclass(frozen=True)
class GoldenCase:
    name: str
    quantity: str
    expected: float
    tolerance: float
    provenance: str


@dataclass(frozen=True)
class GoldenResult:
    case: GoldenCase
    actual: float
    passed: bool

    def as_dict(self) -> dict:
        return {
            "name": self.case.name,
            "quantity": self.case.quantity,
            "expected": self.case.expected,
            "actual": self.actual,
            "tolerance": self.case.tolerance,
            "passed": self.passed,
            "provenance": self.case.provenance,
        }


def load_cases(text: str | None = None) -> list:
    if text is None:
        text = resources.files("acme").joinpath("data/golden_cases.csv").read_text(encoding="utf-8")
    return [GoldenCase(r["name"], r["quantity"], float(r["expected"]), float(r["tolerance"]),
                       r["provenance"]) for r in csv.DictReader(io.StringIO(text))]


@lru_cache(maxsize=None)
def _published(I: float) -> ReductionResult:
    return reduction_factor(ALTAMONT.with_interval(I), n_terms=PUBLISHED_TERMS)


def _index_checksum(k):
    return sum(10 * m + n for m, n in enumerate_qstar_indices(k))


def _constant_case_errors(bleed_of, legacy_fn):
    worst = 0.0
    for s in GRID_S:
        for ratio in GRID_RATIO:
            p = ConstantCaseParams(s, 1.0, ratio)
            # R* = C / estimate for any C > 0
            want = 1.0 / legacy_fn(1.0, p)
            got = reduction_constant_case(s, 1.0, ratio, bleed_of(s))
            worst = max(worst, abs(got / want - 1.0))
    return worst


def _huso_pollock():
    worst = 0.0
    for s in GRID_S:
        for ratio in [r for r in GRID_RATIO if r <= 4.6] + [4.6]:
            p = ConstantCaseParams(s, 1.0, ratio)
            worst = max(worst, abs(huso(1.0, p) / pollock(1.0, p) - 1.0))
    return worst


def _legacy_ratio(s, t_hat, I):
    return compare_all(100.0, ConstantCaseParams(s, t_hat, I)).spread


def random_draws(n=100, seed=7, alpha=1.0):
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        p = AcmeParams.from_values(alpha, rng.uniform(0.02, 0.3), rng.uniform(0.1, 2.0),
                                   rng.uniform(0.0, 0.2), rng.uniform(0.0, 1.0),
                                   rng.uniform(1.0, 14.0))
        k = int(rng.integers(0, 5))
        idx = enumerate_qstar_indices(k)
        m, n_ = idx[int(rng.integers(0, len(idx)))]
        out.append((p, k, m, n_))
    return out


def closed_form_error(alpha: float, n=100, seed=7) -> float:
    worst = 0.0
    for p, k, m, n_ in random_draws(n, seed, alpha):
        ref = q_star_quadrature(p, k, m, n_)
        if alpha == 1.0:
            got = q_star_closed_alpha1(p, k, m, n_)
        else:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", ClosedFormMismatch)
                got = q_star_closed_alpha_half(p, k, m, n_, check=False)
        if ref != 0.0:
            worst = max(worst, abs(got / ref - 1.0))
    return worst


def bruteforce_pmf(C: int, M: int, rr: ReductionResult, I: float, xi: float, lam: float) -> float:
    """P[C, M] / P[C] by summing over the number x of new carcasses.

    The prior factors lambda^xi / Gamma(xi) cancel in the ratio and are left
    out, so lambda = 0 (the objective prior) is allowed.
    """
    R, T0 = rr.r_star, rr.t_star_0
    gap = R - T0
    logs = []
    for x in range(min(C, M) + 1):
        logs.append(math.lgamma(xi + C + M - x) - math.lgamma(C - x + 1)
                    - math.lgamma(M - x + 1) - math.lgamma(x + 1)
                    + (x * math.log(T0) if x else 0.0) + (C - x) * math.log(gap)
                    + (M - x) * math.log1p(-T0) + (C + M - x) * math.log(I)
                    - (xi + C + M - x) * math.log(lam + (gap + 1.0) * I))
    top = max(logs)
    joint = top + math.log(math.fsum(math.exp(v - top) for v in logs))
    marginal = (math.lgamma(xi + C) - math.lgamma(C + 1)
                + C * math.log(R * I) - (xi + C) * math.log(lam + R * I))
    return math.exp(joint - marginal)


def posterior_bruteforce_error(max_c=5, max_m=50, prior=None, rr=None) -> float:
    rr = rr or _published(7.0)
    prior = prior or inf.PriorSpec.objective()
    worst = 0.0
    for C in range(max_c + 1):
        post = inf.mortality_posterior_pmf(C, rr, 7.0, prior)
        for M in range(min(max_m, post.m_max) + 1):
            ref = bruteforce_pmf(C, M, rr, 7.0, prior.xi, prior.lam)
            worst = max(worst, abs(post.pmf[M] / ref - 1.0))
    return worst


def posterior_mass_error(max_c=50) -> float:
    rr = _published(7.0)
    return max(abs(inf.mortality_posterior_pmf(C, rr, 7.0).total_mass - 1.0)
               for C in range(max_c + 1))


def _hpd_nested(C):
    post = inf.mortality_posterior_pmf(C, _published(7.0), 7.0)
    a = inf.mortality_interval(post, 0.5, "hpd")
    b = inf.mortality_interval(post, 0.9, "hpd")
    return float(b.lo <= a.lo and a.hi <= b.hi)


def _one_sided_mismatches(max_c=20, gamma=0.9):
    rr = _published(7.0)
    bad = 0
    for C in range(max_c + 1):
        iv = inf.mortality_interval(inf.no_bleed_posterior(C, rr, 7.0), gamma, "one_sided")
        want = C + neg_binomial_quantile(gamma, NegBinomialParams(C + 0.5, rr.r_star))
        bad += (iv.lo, iv.hi) != (C, want)
    return float(bad)


def _bound_violations(I=7.0):
    p = ALTAMONT.with_interval(I)
    ref = reduction_factor(p, n_terms=50).r_star
    return float(sum(abs(reduction_factor(p, n_terms=N).r_star - ref) > truncation_bound(p, N)
                     for N in range(1, 11)))


def _bound_ratio(N, I=7.0):
    p = ALTAMONT.with_interval(I)
    return truncation_bound(p, N) / reduction_factor(p, n_terms=50).r_star


def _simulated_mean_ratio(seed=11):
    ds = simulate_idt(ALTAMONT, 500, 70.0, np.arange(7.0, 211.0, 7.0), seed)
    weib = fit_removal(ds)
    expo = fit_removal(ds, fixed_alpha=1.0)
    w = math.gamma(1 + 1 / weib.estimates["alpha"]) / weib.estimates["rho"]
    return w / (1.0 / expo.estimates["rho"])


CASES = {
    ("altamont_persistence", "weibull_mean_days"): lambda: mean_persistence(ALTAMONT.removal),
    ("altamont_persistence", "simulated_weibull_over_exponential_mean"): _simulated_mean_ratio,
    ("altamont_proficiency", "proficiency_at_age_0"): lambda: float(proficiency(ALTAMONT.discovery, 0.0)),
    ("constant_case", "pollock_max_rel_err"): lambda: _constant_case_errors(lambda s: 0.0, pollock),
    ("constant_case", "shoemaker_max_rel_err"): lambda: _constant_case_errors(lambda s: 1.0, shoemaker),
    ("constant_case", "erickson_max_rel_err"): lambda: _constant_case_errors(lambda s: 1.0 / (1.0 - s), erickson),
    ("constant_case", "huso_pollock_max_rel_err"): _huso_pollock,
    ("legacy_ratio", "s0.5_that10_i40"): lambda: _legacy_ratio(0.5, 10.0, 40.0),
    ("legacy_ratio", "s0.5_that10_i11"): lambda: _legacy_ratio(0.5, 10.0, 11.0),
    ("closed_form", "alpha1_max_rel_err"): lambda: closed_form_error(1.0),
    ("closed_form", "alpha_half_max_rel_err"): lambda: closed_form_error(0.5),
    ("deviance", "p_value_d22.63"): lambda: chi2_sf(22.63, 2),
    ("posterior", "bruteforce_max_rel_err"): lambda: max(
        posterior_bruteforce_error(), posterior_bruteforce_error(prior=inf.PriorSpec.empirical(2.0, 5.0))),
    ("posterior", "mass_max_abs_err"): posterior_mass_error,
    ("posterior", "hpd50_in_hpd90_c5"): lambda: _hpd_nested(5),
    ("no_bleed", "one_sided_mismatches"): _one_sided_mismatches,
    ("classical", "c0_r0.5_g0.9_hi"):
        lambda: float(inf.classical_binomial_interval(0, ReductionResult.from_values(0.5, 0.5), 0.9).hi),
    ("altamont_i7", "bound_ratio_n3"): lambda: _bound_ratio(3),
    ("altamont_i7", "bound_ratio_n5"): lambda: _bound_ratio(5),
    ("altamont_i7", "bound_realized_violations"): _bound_violations,
}
for _k in range(3):
    CASES[(f"qstar_indices_k{_k}", "count")] = lambda k=_k: float(len(enumerate_qstar_indices(k)))
    CASES[(f"qstar_indices_k{_k}", "checksum")] = lambda k=_k: float(_index_checksum(k))
for _I in (1, 2, 7, 14):
    CASES[(f"altamont_i{_I}", "r_star")] = lambda I=_I: _published(float(I)).r_star
    CASES[(f"altamont_i{_I}", "t_star_0")] = lambda I=_I: _published(float(I)).t_star_0
    CASES[(f"altamont_i{_I}", "multiplier")] = lambda I=_I: _published(float(I)).multiplier
    CASES[(f"altamont_i{_I}", "point_estimate_c1")] = lambda I=_I: inf.point_estimate(1, _published(float(I)))


def evaluate(case: GoldenCase) -> GoldenResult:
    fn = CASES.get((case.name, case.quantity))
    if fn is None:
        return GoldenResult(case, math.nan, False)
    try:
        actual = float(fn())
    except Exception:  # a crashing case is a failed case
        actual = math.nan
    passed = math.isfinite(actual) and abs(actual - case.expected) <= case.tolerance
    return GoldenResult(case, actual, passed)


def run_golden_suite(cases=None) -> list:
    """Evaluate every golden case; returns one :class:`GoldenResult` per row."""
    return [evaluate(c) for c in (cases if cases is not None else load_cases())]


def benchmark(repeats: int = 5, params: AcmeParams = ALTAMONT) -> dict:
    """Best-of-``repeats`` wall time of the reduction engine, in seconds."""
    times = {}
    for label, kwargs in (("converged_1e-3", {}), ("five_terms", {"n_terms": 5})):
        best = math.inf
        for _ in range(repeats):
            t = time.perf_counter()
            reduction_factor(params, **kwargs)
            best = min(best, time.perf_counter() - t)
        times[label] = best
    return times
