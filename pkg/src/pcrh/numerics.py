"""Numerical substrate: dense SPD linear algebra, distribution functions,
seeded sampling and series statistics.

Matrices are plain ``numpy`` arrays and series are 1-D arrays. Random draws
go through a ``numpy.random.Generator`` (the ``RngState``); every sampler
here is a pure function of that generator's state.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg, special

from .errors import DegenerateInput, DomainError, NotPositiveDefinite

RngState = np.random.Generator


@dataclass(frozen=True)
class Tolerances:
    symmetry: float = 1e-10
    pivot: float = 1e-12
    rank: float = 1e-8


TOL = Tolerances()


def make_rng(seed: int = 0, stream: int = 0) -> RngState:
    """Generator seeded from a 64-bit unsigned integer.

    Nonzero ``stream`` values give independent generators for the same seed.
    """
    if seed < 0 or seed >= 2**64:
        raise DomainError(f"seed must be a 64-bit unsigned integer, got {seed}")
    if stream:
        return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, stream])))
    return np.random.Generator(np.random.PCG64(seed))


# ---------------------------------------------------------------------------
# linear algebra
# ---------------------------------------------------------------------------


def cholesky(m) -> np.ndarray:
    """Lower-triangular ``L`` with ``L @ L.T == m``.

    Accepts a single matrix or a stack ``(..., k, k)``. Raises
    NotPositiveDefinite when any pivot is nonpositive relative to the
    largest diagonal entry.
    """
    m = np.asarray(m, dtype=float)
    if m.ndim < 2 or m.shape[-1] != m.shape[-2]:
        raise DomainError(f"expected square matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise DomainError("matrix has non-finite entries")
    scale = max(1.0, float(np.max(np.abs(m)))) if m.size else 1.0
    if np.max(np.abs(m - np.swapaxes(m, -1, -2)), initial=0.0) > TOL.symmetry * scale:
        raise DomainError("matrix is not symmetric")
    try:
        L = np.linalg.cholesky(m)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from None
    piv = np.diagonal(L, axis1=-2, axis2=-1) ** 2
    dmax = np.max(np.diagonal(m, axis1=-2, axis2=-1), axis=-1, keepdims=True)
    if np.any(~np.isfinite(piv)) or np.any(piv <= TOL.pivot * dmax):
        raise NotPositiveDefinite("pivot below tolerance")
    return L


def solve_spd(m, b) -> np.ndarray:
    """Solve ``m x = b`` for symmetric positive-definite ``m``."""
    L = cholesky(m)
    b = np.asarray(b, dtype=float)
    if b.shape[0] != L.shape[0]:
        raise DomainError(f"dimension mismatch: {L.shape} vs {b.shape}")
    return linalg.cho_solve((L, True), b)


def logdet_spd(m) -> float:
    L = cholesky(m)
    return 2.0 * float(np.sum(np.log(np.diag(L))))


# ---------------------------------------------------------------------------
# distribution functions
# ---------------------------------------------------------------------------


def chi2_survival(x, df):
    """P(chi2_df > x)."""
    x = np.asarray(x, dtype=float)
    if np.any(x < 0) or np.any(np.isnan(x)):
        raise DomainError("chi2_survival requires x >= 0")
    if not df > 0:
        raise DomainError("chi2_survival requires df > 0")
    out = special.gammaincc(0.5 * df, 0.5 * x)
    return float(out) if out.ndim == 0 else out


def normal_cdf(x):
    out = special.ndtr(np.asarray(x, dtype=float))
    return float(out) if out.ndim == 0 else out


def normal_quantile(p):
    p = np.asarray(p, dtype=float)
    if np.any(p <= 0) or np.any(p >= 1) or np.any(np.isnan(p)):
        raise DomainError("normal_quantile requires 0 < p < 1")
    out = special.ndtri(p)
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# series statistics
# ---------------------------------------------------------------------------


def _as_series(s, min_len=1) -> np.ndarray:
    s = np.asarray(s, dtype=float).ravel()
    if s.size < min_len:
        raise DegenerateInput(f"series needs at least {min_len} values, got {s.size}")
    if not np.all(np.isfinite(s)):
        raise DomainError("series has non-finite values")
    return s


def sample_skewness(s) -> float:
    """Moment skewness m3 / m2**1.5 (biased central moments)."""
    s = _as_series(s, 3)
    d = s - s.mean()
    m2 = np.mean(d * d)
    if m2 <= 0 or m2 <= (np.finfo(float).eps * np.max(np.abs(s))) ** 2:
        raise DegenerateInput("constant series has no skewness")
    return float(np.mean(d**3) / m2**1.5)


def acf(s, max_lag: int) -> np.ndarray:
    """Autocorrelations at lags 0..max_lag, normalized by the lag-0 autocovariance."""
    s = _as_series(s, 1)
    n = s.size
    if max_lag < 0 or n <= max_lag:
        raise DomainError(f"need len(series) > max_lag, got {n} <= {max_lag}")
    d = s - s.mean()
    c0 = np.dot(d, d) / n
    if c0 <= 0 or c0 <= (np.finfo(float).eps * np.max(np.abs(s))) ** 2:
        raise DegenerateInput("constant series has undefined autocorrelation")
    out = np.empty(max_lag + 1)
    out[0] = 1.0
    for k in range(1, max_lag + 1):
        out[k] = np.dot(d[:-k], d[k:]) / n / c0
    return out


def effective_sample_size(s, max_lag: int | None = None) -> float:
    """n / (1 + 2 * sum of the initial positive run of autocorrelations)."""
    s = _as_series(s, 2)
    n = s.size
    max_lag = n - 1 if max_lag is None else min(max_lag, n - 1)
    acf(s, 0)  # raises on constant input
    d = s - s.mean()
    c0 = np.dot(d, d) / n
    total = 0.0
    for k in range(1, max_lag + 1):
        rho = np.dot(d[:-k], d[k:]) / n / c0
        if rho <= 0:
            break
        total += rho
    return float(n / (1.0 + 2.0 * total))


# ---------------------------------------------------------------------------
# samplers
# ---------------------------------------------------------------------------


def draw_normal(rng: RngState, mean=0.0, sd=1.0, size=None):
    if np.any(np.asarray(sd) < 0):
        raise DomainError("sd must be >= 0")
    return rng.normal(mean, sd, size)


def draw_scaled_inv_chi2(rng: RngState, dof, scale, size=None):
    """Draw from Inv-chi2(dof, scale), i.e. dof * scale / chi2_dof."""
    dof = np.asarray(dof, dtype=float)
    scale = np.asarray(scale, dtype=float)
    if np.any(dof <= 0) or np.any(scale <= 0):
        raise DomainError("scaled inverse chi-square needs dof > 0 and scale > 0")
    out = dof * scale / rng.chisquare(dof, size)
    return float(out) if np.ndim(out) == 0 else out
