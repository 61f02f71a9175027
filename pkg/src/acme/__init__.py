"""ACME: carcass-count based estimation of avian and bat mortality at wind facilities."""

__version__ = "0.1.0"

from .reduction import ALTAMONT, AcmeParams, ReductionResult, reduction_factor  # noqa: E402

__all__ = ["ALTAMONT", "AcmeParams", "ReductionResult", "reduction_factor", "__version__"]
