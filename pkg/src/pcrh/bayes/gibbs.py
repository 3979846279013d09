"""Gibbs sampler for the hierarchical random-effects regression.

Priors::

    sigma_eps^2 ~ Inv-chi2(a, b)        tau_k^2 ~ Inv-chi2(c, d)
    beta_l ~ N(0, sigma_l^2)            b_i | tau^2 ~ N(0, diag(tau^2))

With a random intercept only, the four full conditionals are the
textbook conjugate updates. The intercept+slope variant draws each
subject's (b1, b2) jointly from a bivariate normal and keeps independent
Inv-chi2 priors on the two variances.
"""
from __future__ import annotations

import math
import weakref
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import linalg

from ..design import DesignMatrices
from ..errors import DegenerateInput, DomainError, NotPositiveDefinite
from ..numerics import RngState, cholesky, draw_scaled_inv_chi2, effective_sample_size, make_rng

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class PriorHyperparams:
    a: float = 0.01   # dof, residual variance prior
    b: float = 1.0    # scale, residual variance prior
    c: float = 0.01   # dof, random-effect variance prior
    d: float = 1.0    # scale, random-effect variance prior
    sigma_l_sq: float | tuple[float, ...] = 1e6

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0 and self.c > 0 and self.d > 0):
            raise DomainError("prior dof and scale parameters must be positive")
        if np.any(np.asarray(self.sigma_l_sq, dtype=float) <= 0):
            raise DomainError("coefficient prior variances must be positive")

    def coef_precision(self, p: int) -> np.ndarray:
        v = np.broadcast_to(np.asarray(self.sigma_l_sq, dtype=float), (p,))
        return 1.0 / v

    def to_dict(self) -> dict:
        s = self.sigma_l_sq
        return {"a": self.a, "b": self.b, "c": self.c, "d": self.d,
                "sigma_l_sq": list(s) if isinstance(s, tuple) else s}


@dataclass
class GibbsState:
    beta: np.ndarray          # (p,)
    b: np.ndarray             # (m, q)
    tau_sq: np.ndarray        # (q,)
    sigma_eps_sq: float

    @property
    def tau1_sq(self) -> float:
        return float(self.tau_sq[0])

    def copy(self) -> "GibbsState":
        return GibbsState(self.beta.copy(), self.b.copy(), self.tau_sq.copy(), self.sigma_eps_sq)


class _Prepared:
    def __init__(self, dm: DesignMatrices):
        m, q = dm.n_subjects, dm.q
        self.XtX = dm.X.T @ dm.X
        self.ZtZ = np.zeros((m, q, q))
        np.add.at(self.ZtZ, dm.group, dm.Z[:, :, None] * dm.Z[:, None, :])


_PREP: "weakref.WeakKeyDictionary[DesignMatrices, _Prepared]" = weakref.WeakKeyDictionary()


def _prep(dm: DesignMatrices) -> _Prepared:
    prep = _PREP.get(dm)
    if prep is None:
        prep = _PREP[dm] = _Prepared(dm)
    return prep


def _random_part(dm: DesignMatrices, b: np.ndarray) -> np.ndarray:
    return np.sum(dm.Z * b[dm.group], axis=1)


def _check_state(state: GibbsState, dm: DesignMatrices) -> None:
    if state.beta.shape != (dm.p,) or state.b.shape != (dm.n_subjects, dm.q) or state.tau_sq.shape != (dm.q,):
        raise DomainError("state dimensions do not match the design")
    if not (np.all(state.tau_sq > 0) and state.sigma_eps_sq > 0):
        raise DomainError("state variances must be positive")


# ---------------------------------------------------------------------------
# full conditionals
# ---------------------------------------------------------------------------


def cond_draw_b(state: GibbsState, dm: DesignMatrices, priors: PriorHyperparams, rng: RngState) -> np.ndarray:
    """Draw every subject's random effects given beta and the variances."""
    s2 = state.sigma_eps_sq
    r = dm.y - dm.X @ state.beta
    m, q = dm.n_subjects, dm.q
    if q == 1:
        zr = np.bincount(dm.group, weights=r * dm.Z[:, 0], minlength=m)
        prec = _prep(dm).ZtZ[:, 0, 0] / s2 + 1.0 / state.tau_sq[0]
        mean = (zr / s2) / prec
        return (mean + rng.standard_normal(m) / np.sqrt(prec))[:, None]
    zr = np.zeros((m, q))
    np.add.at(zr, dm.group, dm.Z * r[:, None])
    prec = _prep(dm).ZtZ / s2 + np.diag(1.0 / state.tau_sq)
    cov = np.linalg.inv(prec)
    cov = 0.5 * (cov + np.swapaxes(cov, 1, 2))
    mean = np.einsum("mij,mj->mi", cov, zr / s2)
    L = cholesky(cov)
    return mean + np.einsum("mij,mj->mi", L, rng.standard_normal((m, q)))


def beta_conditional(state: GibbsState, dm: DesignMatrices, priors: PriorHyperparams):
    """Mean vector and precision matrix of beta given the other blocks."""
    s2 = state.sigma_eps_sq
    y_adj = dm.y - _random_part(dm, state.b)
    prec = _prep(dm).XtX / s2 + np.diag(priors.coef_precision(dm.p))
    L = cholesky(prec)
    mean = linalg.cho_solve((L, True), dm.X.T @ y_adj / s2)
    return mean, prec, L


def cond_draw_beta(state: GibbsState, dm: DesignMatrices, priors: PriorHyperparams, rng: RngState) -> np.ndarray:
    """Draw beta ~ N(P^-1 X'(y - Zb) / sigma^2, P^-1), P = X'X / sigma^2 + diag(1 / sigma_l^2)."""
    mean, _, L = beta_conditional(state, dm, priors)
    return mean + linalg.solve_triangular(L.T, rng.standard_normal(dm.p), lower=False)


def cond_draw_tau_sq(state: GibbsState, priors: PriorHyperparams, rng: RngState) -> np.ndarray:
    """Draw each random-effect variance from Inv-chi2(m + c, (sum b^2 + c d) / (m + c))."""
    m = state.b.shape[0]
    dof = m + priors.c
    scale = (np.sum(state.b**2, axis=0) + priors.c * priors.d) / dof
    return np.array([draw_scaled_inv_chi2(rng, dof, s) for s in scale])


def cond_draw_tau1_sq(state: GibbsState, priors: PriorHyperparams, rng: RngState) -> float:
    m = state.b.shape[0]
    dof = m + priors.c
    return draw_scaled_inv_chi2(rng, dof, (float(np.sum(state.b[:, 0] ** 2)) + priors.c * priors.d) / dof)


def cond_draw_sigma_eps_sq(state: GibbsState, dm: DesignMatrices, priors: PriorHyperparams,
                           rng: RngState) -> float:
    """Draw sigma_eps^2 from Inv-chi2(N + a, (RSS + a b) / (N + a))."""
    r = dm.y - dm.X @ state.beta - _random_part(dm, state.b)
    dof = dm.n_obs + priors.a
    return draw_scaled_inv_chi2(rng, dof, (float(r @ r) + priors.a * priors.b) / dof)


# ---------------------------------------------------------------------------
# chain
# ---------------------------------------------------------------------------


@dataclass
class ParamSummary:
    mean: float
    sd: float
    lower: float
    upper: float
    ess: float | None


@dataclass
class GibbsChain:
    labels: tuple[str, ...]
    random_labels: tuple[str, ...]
    beta: np.ndarray          # (R, p)
    b: np.ndarray             # (R, m, q)
    tau_sq: np.ndarray        # (R, q)
    sigma_eps_sq: np.ndarray  # (R,)
    n_iter: int
    burn_fraction: float
    seed: int | None
    subject_ids: tuple[str, ...] = ()
    priors: PriorHyperparams = field(default_factory=PriorHyperparams)
    model: str = ""

    @property
    def n_retained(self) -> int:
        return self.sigma_eps_sq.size

    @property
    def n_burn(self) -> int:
        return self.n_iter - self.n_retained

    @property
    def variance_names(self) -> list[str]:
        return [f"tau{k + 1}_sq" for k in range(self.tau_sq.shape[1])] + ["sigma_eps_sq"]

    def parameters(self) -> dict[str, np.ndarray]:
        """Scalar parameter traces keyed by name, in export order."""
        out = {lab: self.beta[:, j] for j, lab in enumerate(self.labels)}
        for k in range(self.tau_sq.shape[1]):
            out[f"tau{k + 1}_sq"] = self.tau_sq[:, k]
        out["sigma_eps_sq"] = self.sigma_eps_sq
        return out

    @cached_property
    def summaries(self) -> dict[str, ParamSummary]:
        out = {}
        for name, tr in self.parameters().items():
            lo, hi = np.quantile(tr, [0.025, 0.975])
            try:
                ess = effective_sample_size(tr)
            except DegenerateInput:
                ess = None
            out[name] = ParamSummary(float(np.mean(tr)), float(np.std(tr, ddof=1)) if tr.size > 1 else 0.0,
                                     float(lo), float(hi), ess)
        return out

    def posterior_mean_state(self) -> GibbsState:
        return GibbsState(self.beta.mean(axis=0), self.b.mean(axis=0), self.tau_sq.mean(axis=0),
                          float(self.sigma_eps_sq.mean()))


def _ols_init(dm: DesignMatrices) -> GibbsState:
    beta, *_ = np.linalg.lstsq(dm.X, dm.y, rcond=None)
    r = dm.y - dm.X @ beta
    v = float(np.var(r, ddof=1))
    return GibbsState(beta, np.zeros((dm.n_subjects, dm.q)), np.full(dm.q, v), v)


def retained_count(n_iter: int, burn_fraction: float) -> int:
    return int(math.floor(n_iter * (1.0 - burn_fraction)))


def run_gibbs(dm: DesignMatrices, priors: PriorHyperparams | None = None, n_iter: int = 10_000,
              burn_fraction: float = 0.2, seed: int = 0, init: GibbsState | None = None) -> GibbsChain:
    """Run the sampler, sweeping b -> beta -> tau^2 -> sigma_eps^2 each iteration."""
    priors = priors or PriorHyperparams()
    if n_iter < 100:
        raise DomainError("n_iter must be at least 100")
    if not 0 <= burn_fraction < 1:
        raise DomainError("burn_fraction must be in [0, 1)")
    rng = make_rng(seed)
    state = init.copy() if init is not None else _ols_init(dm)
    _check_state(state, dm)
    keep = retained_count(n_iter, burn_fraction)
    start = n_iter - keep
    R, p, m, q = keep, dm.p, dm.n_subjects, dm.q
    out_beta = np.empty((R, p))
    out_b = np.empty((R, m, q))
    out_tau = np.empty((R, q))
    out_sig = np.empty(R)
    for it in range(n_iter):
        try:
            state.b = cond_draw_b(state, dm, priors, rng)
            state.beta = cond_draw_beta(state, dm, priors, rng)
            state.tau_sq = cond_draw_tau_sq(state, priors, rng)
            state.sigma_eps_sq = cond_draw_sigma_eps_sq(state, dm, priors, rng)
        except NotPositiveDefinite as exc:
            raise NotPositiveDefinite(f"iteration {it}: {exc}") from exc
        except (DomainError, FloatingPointError) as exc:
            raise DomainError(f"iteration {it}: {exc}") from exc
        if it >= start:
            k = it - start
            out_beta[k] = state.beta
            out_b[k] = state.b
            out_tau[k] = state.tau_sq
            out_sig[k] = state.sigma_eps_sq
    return GibbsChain(dm.labels, tuple(dm.spec.random_labels), out_beta, out_b, out_tau, out_sig,
                      n_iter, burn_fraction, seed, dm.subject_ids, priors, dm.spec.to_string())
