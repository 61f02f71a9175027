"""Classical constant-rate mortality estimators.

All four assume exponential persistence with mean ``t_hat`` and constant
searcher proficiency ``s``; each is the ACME constant-case estimator for a
particular bleed-through value (0 for Pollock, 1 for Shoemaker, 1/(1-s) for
Erickson).  Huso clips Pollock's persistence term at 0.99.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

# Huso and Pollock agree while I / t_hat stays below log(100) ~= 4.6
HUSO_CLIP = 0.99
HUSO_RATIO = math.log(100.0)


@dataclass(frozen=True)
class ConstantCaseParams:
    s: float
    t_hat: float
    I: float

    def __post_init__(self):
        if not 0 < self.s <= 1:
            raise ValueError(f"proficiency s must lie in (0, 1], got {self.s}")
        if not (self.t_hat > 0 and self.I > 0):
            raise ValueError("t_hat and I must be positive")

    @property
    def ratio(self) -> float:
        return self.I / self.t_hat


@dataclass(frozen=True)
class LegacyEstimates:
    erickson: float
    shoemaker: float
    pollock: float
    huso: float

    def as_dict(self) -> dict:
        return asdict(self)

    @property
    def spread(self) -> float:
        """max / min across the four estimates (nan when all are zero)."""
        vals = list(self.as_dict().values())
        return max(vals) / min(vals) if min(vals) > 0 else math.nan


class ConsistencyError(ArithmeticError):
    pass


def _base(C: float, p: ConstantCaseParams) -> float:
    if C < 0:
        raise ValueError("count must be nonnegative")
    return p.I * C / (p.s * p.t_hat)


def erickson(C: float, p: ConstantCaseParams) -> float:
    return _base(C, p)


def pollock(C: float, p: ConstantCaseParams) -> float:
    return _base(C, p) / -math.expm1(-p.ratio)


def huso(C: float, p: ConstantCaseParams) -> float:
    return _base(C, p) / min(HUSO_CLIP, -math.expm1(-p.ratio))


def shoemaker(C: float, p: ConstantCaseParams) -> float:
    grow = math.expm1(p.ratio)
    return _base(C, p) * (grow + p.s) / grow


def compare_all(C: float, p: ConstantCaseParams, rtol: float = 1e-9) -> LegacyEstimates:
    """All four estimates, after checking their ordering and the Huso identity.

    Raises :class:`ConsistencyError` if erickson < shoemaker < pollock <= huso
    fails (strictly only for C > 0 and s < 1) or if
    (1 - exp(-min(log 100, I/t_hat))) * huso differs from erickson.
    """
    est = LegacyEstimates(erickson(C, p), shoemaker(C, p), pollock(C, p), huso(C, p))
    slack = 1e-12 * max(est.huso, 1.0)
    if C > 0 and p.s < 1:
        ok = est.erickson < est.shoemaker < est.pollock <= est.huso + slack
    else:
        ok = est.erickson <= est.shoemaker + slack <= est.pollock + 2 * slack <= est.huso + 3 * slack
    if not ok:
        raise ConsistencyError(f"ordering violated: {est}")
    scaled = -math.expm1(-min(HUSO_RATIO, p.ratio)) * est.huso
    if abs(scaled - est.erickson) > rtol * max(abs(est.erickson), 1e-300):
        raise ConsistencyError(f"Huso identity violated: {scaled} vs {est.erickson}")
    return est
