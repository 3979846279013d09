"""Trace, autocorrelation and effective sample size per chain parameter."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DomainError
from ..numerics import acf, effective_sample_size
from .gibbs import GibbsChain


@dataclass
class ParamDiagnostics:
    trace: np.ndarray
    acf: np.ndarray
    ess: float


def series_diagnostics(trace, max_lag: int = 50) -> ParamDiagnostics:
    trace = np.asarray(trace, dtype=float)
    if trace.size <= max_lag:
        raise DomainError(f"chain length {trace.size} must exceed max_lag {max_lag}")
    return ParamDiagnostics(trace, acf(trace, max_lag), effective_sample_size(trace))


def chain_diagnostics(chain: GibbsChain, max_lag: int = 50) -> dict[str, ParamDiagnostics]:
    """Diagnostics for each scalar parameter; raises DegenerateInput on a constant trace."""
    return {name: series_diagnostics(tr, max_lag) for name, tr in chain.parameters().items()}
