"""Percentage interpretation of log-scale coefficients."""
from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class EffectReport:
    ga: float
    ct_delta: float
    log_effect: float
    percent_change: float


def effect_percent(beta_ct: float, beta_ctga: float, ga: float, ct_delta: float = 1.0) -> EffectReport:
    """Percent change in median pCRH for ``ct_delta`` more traumas at gestational age ``ga``."""
    log_effect = ct_delta * (beta_ct + beta_ctga * ga)
    return EffectReport(ga, ct_delta, log_effect, 100.0 * math.expm1(log_effect))


def piecewise_slope_percent(beta_ga: float, beta_hinge: float, beta_ctga: float, ct: float,
                            segment: str) -> float:
    """Weekly percent growth of median pCRH before or after the knot."""
    if segment not in ("before", "after"):
        raise ValueError(f"segment must be 'before' or 'after', got {segment!r}")
    slope = beta_ga + ct * beta_ctga
    if segment == "after":
        slope += beta_hinge
    return 100.0 * math.expm1(slope)
