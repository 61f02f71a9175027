"""Maximum-likelihood fits of persistence and discovery parameters from IDT data.

Removal (alpha, rho) comes from interval-censored persistence times; discovery
(a, b, bleed) from the blinded search outcomes.  The two likelihoods share no
parameters and are fitted separately.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, logit, logsumexp

from .idt_data import IdtDataset
from .simplex import simplex_minimize
from .stats_kernel import reg_gamma_upper

B_FLOOR = 1e-10
BLEED_CLAMP = 1e-9
HESSIAN_STEP = 1e-4
BOUNDARY_TOL = 1e-6
A_CEILING = 30.0


class FitError(RuntimeError):
    pass


@dataclass
class FitResult:
    estimates: dict
    std_errors: dict
    nllh: float
    converged: bool
    n_evals: int
    flags: tuple = ()
    n_used: int = 0
    covariance: list | None = field(default=None, repr=False)

    def as_dict(self) -> dict:
        return {
            "estimates": dict(self.estimates),
            "std_errors": dict(self.std_errors),
            "nllh": self.nllh,
            "converged": self.converged,
            "n_evals": self.n_evals,
            "flags": list(self.flags),
            "n_used": self.n_used,
        }


@dataclass(frozen=True)
class DevianceReport:
    deviance: float
    dof: int
    p_value: float
    nllh_full: float
    nllh_constant: float

    def as_dict(self) -> dict:
        return {
            "deviance": self.deviance,
            "dof": self.dof,
            "p_value": self.p_value,
            "nllh_full": self.nllh_full,
            "nllh_constant": self.nllh_constant,
        }


def chi2_sf(x: float, dof: int) -> float:
    if x <= 0:
        return 1.0
    return reg_gamma_upper(dof / 2.0, x / 2.0)


def _hessian(f, x, step=HESSIAN_STEP):
    n = x.size
    H = np.empty((n, n))
    f0 = f(x)
    for i in range(n):
        ei = np.zeros(n)
        ei[i] = step
        H[i, i] = (f(x + ei) - 2.0 * f0 + f(x - ei)) / step**2
        for j in range(i + 1, n):
            ej = np.zeros(n)
            ej[j] = step
            H[i, j] = H[j, i] = (
                f(x + ei + ej) - f(x + ei - ej) - f(x - ei + ej) + f(x - ei - ej)
            ) / (4.0 * step**2)
    return H


def _inverse_if_pd(H):
    try:
        np.linalg.cholesky(H)
    except np.linalg.LinAlgError:
        return None
    return np.linalg.inv(H)


# --------------------------------------------------------------------------
# removal


def removal_intervals(data: IdtDataset):
    """Ages (tp - t0, ta - t0) with ta = inf for censored carcasses."""
    lo = np.array([c.tp - c.t0 for c in data.carcasses], dtype=float)
    hi = np.array([c.ta_or_inf - c.t0 for c in data.carcasses], dtype=float)
    return lo, hi


def _removal_nllh_arrays(lo, hi, alpha, rho):
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        hp = (rho * lo) ** alpha
        ha = np.where(np.isinf(hi), np.inf, (rho * hi) ** alpha)
        tail = -np.log(-np.expm1(hp - ha))
    return float(hp.sum() + tail.sum())


def removal_nllh(data: IdtDataset, alpha: float, rho: float) -> float:
    """Negative log likelihood of interval-censored Weibull removal times.

    Censored carcasses contribute (rho (tp - t0))^alpha only.  A nonfinite
    result (for instance ta == tp) triggers a RuntimeWarning.
    """
    if not (alpha > 0 and rho > 0):
        raise ValueError("alpha and rho must be positive")
    value = _removal_nllh_arrays(*removal_intervals(data), alpha, rho)
    if not math.isfinite(value):
        warnings.warn("removal likelihood is zero for some carcass", RuntimeWarning, stacklevel=2)
    return value


def fit_removal(data: IdtDataset, fixed_alpha: float | None = None) -> FitResult:
    """Weibull MLE on (log alpha, log rho); SEs by the delta method.

    With ``fixed_alpha`` only rho is fitted (``fixed_alpha=1`` is the
    exponential model).
    """
    lo, hi = removal_intervals(data)
    informative = np.isfinite(hi)
    if len(lo) < 2:
        raise FitError("need at least two carcasses to fit removal")
    if not informative.any():
        return FitResult(
            estimates={"alpha": fixed_alpha if fixed_alpha else math.nan, "rho": 0.0},
            std_errors={},
            nllh=0.0,
            converged=False,
            n_evals=0,
            flags=("non_identified", "rho_at_boundary"),
            n_used=len(lo),
        )
    mid = np.where(informative, 0.5 * (lo + hi), lo)
    rho0 = max(informative.sum(), 1) / max(mid.sum(), 1e-12)

    if fixed_alpha is None:
        def obj(th):
            return _removal_nllh_arrays(lo, hi, math.exp(th[0]), math.exp(th[1]))
        start = np.array([0.0, math.log(rho0)])
    else:
        def obj(th):
            return _removal_nllh_arrays(lo, hi, fixed_alpha, math.exp(th[0]))
        start = np.array([math.log(rho0)])
    res = simplex_minimize(obj, start, scale=0.5)
    th = res.x
    cov = _inverse_if_pd(_hessian(obj, th))
    if fixed_alpha is None:
        est = {"alpha": math.exp(th[0]), "rho": math.exp(th[1])}
        names = ["alpha", "rho"]
    else:
        est = {"alpha": float(fixed_alpha), "rho": math.exp(th[0])}
        names = ["rho"]
    flags = []
    ses = {}
    if cov is None:
        flags.append("singular_hessian")
    else:
        for i, name in enumerate(names):
            ses[name] = est[name] * math.sqrt(cov[i, i])
    if not res.converged:
        flags.append("not_converged")
    return FitResult(est, ses, float(res.fun), res.converged, res.n_evals, tuple(flags),
                     len(lo), None if cov is None else cov.tolist())


# --------------------------------------------------------------------------
# discovery


@dataclass(frozen=True)
class SearchHistories:
    """Padded per-carcass search ages and outcomes at in-presence searches."""

    ages: np.ndarray
    found: np.ndarray
    length: np.ndarray
    last_success: np.ndarray
    skipped: int


def search_histories(data: IdtDataset) -> SearchHistories:
    usable = data.usable_searches()
    t0 = {c.id: c.t0 for c in data.carcasses}
    rows = [(np.array([s.search_time - t0[cid] for s in ss]), np.array([s.discovered for s in ss]))
            for cid, ss in usable.items() if ss]
    skipped = len(usable) - len(rows)
    width = max((len(r[0]) for r in rows), default=0)
    ages = np.zeros((len(rows), width))
    found = np.zeros((len(rows), width), dtype=bool)
    length = np.zeros(len(rows), dtype=int)
    last = np.zeros(len(rows), dtype=int)
    for i, (ag, d) in enumerate(rows):
        ages[i, : len(ag)] = ag
        found[i, : len(d)] = d
        length[i] = len(ag)
        hits = np.flatnonzero(d)
        last[i] = hits[-1] if hits.size else 0
    return SearchHistories(ages, found, length, last, skipped)


def discovery_likelihood_single(ages, found, a: float, b: float, bleed: float) -> float:
    """Probability of one carcass's observed success/failure sequence.

    ``ages`` are carcass ages at the searches where it was known present, in
    order.  The carcass may stop being discoverable after any search
    (probability 1 - bleed); the likelihood sums over the last search ``m``
    at which it was still discoverable, which cannot precede the last
    success.  An empty history has likelihood 1.
    """
    ages = list(ages)
    found = [bool(d) for d in found]
    if not ages:
        return 1.0
    last_hit = max((i for i, d in enumerate(found) if d), default=0)
    terms = []
    prod = 1.0
    for m, (t, d) in enumerate(zip(ages, found)):
        p = math.exp(-a - b * t)
        prod *= p if d else 1.0 - p
        if m == len(ages) - 1:
            terms.append(bleed**m * prod)
        elif m >= last_hit:
            terms.append((1.0 - bleed) * bleed**m * prod)
    return math.fsum(terms)


def _discovery_loglik(h: SearchHistories, a, b, bleed):
    if h.ages.shape[0] == 0:
        return np.zeros(0)
    idx = np.arange(h.ages.shape[1])
    valid = idx[None, :] < h.length[:, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        logp = -a - b * h.ages
        logq = np.where(h.found, logp, np.log(-np.expm1(logp)))
        logq = np.where(valid, logq, 0.0)
        cum = np.cumsum(logq, axis=1)
        log_beta = math.log(bleed) if bleed > 0 else -math.inf
        log_stop = math.log1p(-bleed) if bleed < 1 else -math.inf
        bleed_pow = np.where(idx == 0, 0.0, idx * log_beta)[None, :]
        last = h.length[:, None] - 1
        stop_here = (idx[None, :] >= h.last_success[:, None]) & (idx[None, :] < last)
        terms = np.where(stop_here, log_stop + bleed_pow + cum, -np.inf)
        final = np.where(idx[None, :] == last, bleed_pow + cum, -np.inf)
        return logsumexp(np.concatenate([terms, final], axis=1), axis=1)


def discovery_nllh(data, a: float, b: float, bleed: float) -> float:
    """Sum of -log likelihood over carcasses; +inf flags an impossible sequence.

    ``data`` is an :class:`IdtDataset` or precomputed :class:`SearchHistories`.
    """
    if not (a >= 0 and b >= 0 and 0 <= bleed <= 1):
        raise ValueError("need a, b >= 0 and 0 <= bleed <= 1")
    h = data if isinstance(data, SearchHistories) else search_histories(data)
    ll = _discovery_loglik(h, a, b, bleed)
    value = float(-ll.sum())
    if math.isinf(value):
        warnings.warn("some search history has zero likelihood at these parameters",
                      RuntimeWarning, stacklevel=2)
    return value


def _unpack(th):
    a = math.exp(min(th[0], 700.0))
    b = max(math.exp(min(th[1], 700.0)), B_FLOOR)
    bleed = min(max(float(expit(th[2])), BLEED_CLAMP), 1.0 - BLEED_CLAMP)
    return a, b, bleed


def _fit_constant(h: SearchHistories):
    def obj(th):
        return -_discovery_loglik(h, math.exp(th[0]), 0.0, 1.0).sum()

    total = h.length.sum()
    hits = h.found.sum()
    rate = min(max(hits / max(total, 1), 1e-6), 1 - 1e-6)
    res = simplex_minimize(obj, [math.log(-math.log(rate))], scale=0.3)
    return res, obj


def fit_discovery(data: IdtDataset, constant: bool = False) -> FitResult:
    """MLE of (a, b, bleed) on (log a, log b, logit bleed).

    ``constant=True`` fits the constant-proficiency full-bleed-through
    submodel (b = 0, bleed = 1) instead.  Estimates pinned at a boundary are
    flagged and get no standard error.
    """
    h = data if isinstance(data, SearchHistories) else search_histories(data)
    if h.ages.shape[0] == 0:
        raise FitError("no carcass has an in-presence search")
    flags = []
    if h.skipped:
        flags.append(f"skipped_{h.skipped}_without_searches")
    if not h.found.any():
        return FitResult({"a": math.inf, "b": 0.0 if constant else math.nan,
                          "bleed": 1.0 if constant else math.nan},
                         {}, 0.0, False, 0, tuple(flags + ["no_discoveries", "a_at_boundary"]),
                         int(h.ages.shape[0]))

    if constant:
        res, obj = _fit_constant(h)
        a = math.exp(res.x[0])
        est = {"a": a, "b": 0.0, "bleed": 1.0}
        cov = _inverse_if_pd(_hessian(obj, res.x))
        ses = {"a": a * math.sqrt(cov[0, 0])} if cov is not None else {}
        if not res.converged:
            flags.append("not_converged")
        return FitResult(est, ses, float(res.fun), res.converged, res.n_evals, tuple(flags),
                         int(h.ages.shape[0]))

    if h.ages.shape[1] < 2 and not (h.length >= 2).any():
        raise FitError("need at least one carcass with two in-presence searches")

    def obj(th):
        return -_discovery_loglik(h, *_unpack(th)).sum()

    first = h.found[:, 0].mean()
    a0 = -math.log(min(max(first, 0.05), 0.95))
    start = np.array([math.log(a0), math.log(0.05), logit(0.8)])
    res = simplex_minimize(obj, start, scale=np.array([0.5, 1.0, 1.0]))
    # restart from the constant-model optimum too; keep the better fit
    cres, _ = _fit_constant(h)
    alt = simplex_minimize(obj, np.array([cres.x[0], math.log(1e-3), logit(0.99)]),
                           scale=np.array([0.5, 1.0, 1.0]))
    if alt.fun < res.fun:
        alt.n_evals += res.n_evals
        res = alt
    a, b, bleed = _unpack(res.x)
    est = {"a": a, "b": b, "bleed": bleed}
    free = [0]
    if b < BOUNDARY_TOL:
        flags.append("b_at_boundary")
    else:
        free.append(1)
    if bleed > 1.0 - BOUNDARY_TOL or bleed < BOUNDARY_TOL:
        flags.append("bleed_at_boundary")
    else:
        free.append(2)
    if a > A_CEILING:
        flags.append("a_at_boundary")
        free.remove(0)
    ses = {}
    cov = None
    if free:
        def sub(x):
            th = res.x.copy()
            th[free] = x
            return obj(th)

        cov = _inverse_if_pd(_hessian(sub, res.x[free]))
        if cov is None:
            flags.append("singular_hessian")
        else:
            jac = {0: a, 1: b, 2: bleed * (1.0 - bleed)}
            names = {0: "a", 1: "b", 2: "bleed"}
            for i, k in enumerate(free):
                ses[names[k]] = jac[k] * math.sqrt(cov[i, i])
    if not res.converged:
        flags.append("not_converged")
    return FitResult(est, ses, float(res.fun), res.converged, res.n_evals, tuple(flags),
                     int(h.ages.shape[0]), None if cov is None else cov.tolist())


def deviance_vs_constant(data, full: FitResult | None = None) -> DevianceReport:
    """Likelihood-ratio deviance of the full discovery model against b = 0, bleed = 1."""
    h = data if isinstance(data, SearchHistories) else search_histories(data)
    full = full or fit_discovery(h)
    sub = fit_discovery(h, constant=True)
    if not (math.isfinite(full.nllh) and math.isfinite(sub.nllh)):
        raise FitError("deviance undefined: a fit failed")
    # the submodel is nested, so the full optimum can only be lower
    D = max(0.0, 2.0 * (sub.nllh - full.nllh))
    return DevianceReport(D, 2, chi2_sf(D, 2), full.nllh, sub.nllh)
