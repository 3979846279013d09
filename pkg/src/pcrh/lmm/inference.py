"""Diagnostics and tests built on a fitted mixed model."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from ..design import DesignMatrices
from ..errors import ConvergenceFailure, DomainError, NotNested, NotPositiveDefinite, SingularHessian
from ..numerics import chi2_survival, normal_quantile, sample_skewness
from .fit import LmmFit
from .likelihood import CrossProducts, VarianceComponents, evaluate, loglik_at, relative_factor

SCHEMA_VERSION = 1
FD_REL_STEP = 1e-4
LRT_CLAMP = 1e-6


# ---------------------------------------------------------------------------
# residual diagnostics
# ---------------------------------------------------------------------------


def fitted_values(fit: LmmFit, dm: DesignMatrices, conditional: bool = True) -> np.ndarray:
    mu = dm.X @ fit.beta_hat
    if conditional:
        mu = mu + np.sum(dm.Z * fit.blups[dm.group], axis=1)
    return mu


def pearson_residuals(fit: LmmFit, dm: DesignMatrices) -> np.ndarray:
    """Conditional residuals (y - X beta - Z b) / sigma, in design-row order."""
    return (dm.y - fitted_values(fit, dm)) / math.sqrt(fit.vc.sigma_eps_sq)


def qq_points(res) -> np.ndarray:
    """(theoretical, empirical) pairs at plotting positions (i - 0.5) / n."""
    res = np.asarray(res, dtype=float).ravel()
    sample_skewness(res)  # rejects constant or too-short input
    n = res.size
    theo = normal_quantile((np.arange(1, n + 1) - 0.5) / n)
    return np.column_stack([theo, np.sort(res)])


# ---------------------------------------------------------------------------
# likelihood ratio tests
# ---------------------------------------------------------------------------


@dataclass
class LrtResult:
    statistic: float
    df: float | None
    p_value: float
    method: str
    raw_statistic: float

    @property
    def null_distribution(self) -> str:
        if self.method == "boundary_mixture":
            return "0.5*chi2(1)+0.5*chi2(2)"
        return f"chi2({self.df:g})"

    def to_dict(self) -> dict:
        return {"statistic": self.statistic, "raw_statistic": self.raw_statistic, "df": self.df,
                "null_distribution": self.null_distribution, "p_value": self.p_value,
                "method": self.method}


def lrt(null_fit: LmmFit, alt_fit: LmmFit, method: str = "standard") -> LrtResult:
    """Likelihood ratio test of ``null_fit`` nested in ``alt_fit``.

    ``method="boundary_mixture"`` refers the statistic to
    0.5 chi2(1) + 0.5 chi2(2); it applies to adding a random GA slope
    (variance and covariance) to a random-intercept model.
    """
    if method not in ("standard", "boundary_mixture"):
        raise DomainError(f"unknown LRT method {method!r}")
    if null_fit.criterion != alt_fit.criterion:
        raise DomainError("both fits must use the same criterion")
    if null_fit.n_obs != alt_fit.n_obs or null_fit.n_subjects != alt_fit.n_subjects:
        raise NotNested("fits were computed on different data")
    if not set(null_fit.labels) <= set(alt_fit.labels):
        raise NotNested("null fixed-effect columns are not a subset of the alternative's")
    if not set(null_fit.spec.random_terms) <= set(alt_fit.spec.random_terms):
        raise NotNested("null random terms are not a subset of the alternative's")
    fixed_differ = set(null_fit.labels) != set(alt_fit.labels)
    if fixed_differ and null_fit.criterion != "ML":
        raise DomainError("fixed-effect comparisons need ML fits")
    if method == "boundary_mixture":
        if fixed_differ or null_fit.spec.random_terms != ("1",) or alt_fit.spec.random_terms != ("1", "GA"):
            raise DomainError("boundary mixture applies only to the random-slope test")

    raw = 2.0 * (alt_fit.loglik - null_fit.loglik)
    if raw < -LRT_CLAMP * max(1.0, abs(alt_fit.loglik)):
        raise ConvergenceFailure(f"negative LRT statistic {raw:.3g}: the alternative fit is worse than the null")
    stat = max(raw, 0.0)
    if method == "boundary_mixture":
        p = 0.5 * chi2_survival(stat, 1) + 0.5 * chi2_survival(stat, 2)
        df = None
    else:
        df = (len(alt_fit.labels) + alt_fit.n_variance_params) - (len(null_fit.labels) + null_fit.n_variance_params)
        p = chi2_survival(stat, df) if df > 0 else 1.0
    return LrtResult(stat, df, float(min(max(p, 0.0), 1.0)), method, raw)


# ---------------------------------------------------------------------------
# Satterthwaite degrees of freedom
# ---------------------------------------------------------------------------


@dataclass
class CoefTest:
    label: str
    estimate: float
    se: float
    df: float | None
    t: float
    p: float
    method: str  # "satterthwaite" or "normal"


def _phi_from_vc(vc: VarianceComponents) -> np.ndarray | None:
    if vc.tau1_sq <= 0 or vc.sigma_eps_sq <= 0:
        return None
    if vc.tau2_sq is None:
        return np.array([math.log(vc.tau1_sq), math.log(vc.sigma_eps_sq)])
    if vc.tau2_sq <= 0:
        return None
    return np.array([math.log(vc.tau1_sq), vc.tau12 or 0.0, math.log(vc.tau2_sq), math.log(vc.sigma_eps_sq)])


def _vc_from_phi(phi) -> VarianceComponents:
    if phi.size == 2:
        return VarianceComponents(math.exp(phi[0]), math.exp(phi[1]))
    return VarianceComponents(math.exp(phi[0]), math.exp(phi[3]), math.exp(phi[2]), float(phi[1]))


def _steps(phi, vc):
    h = FD_REL_STEP * np.maximum(1.0, np.abs(phi))
    if phi.size == 4:
        h[1] = FD_REL_STEP * math.sqrt(vc.tau1_sq * vc.tau2_sq)
    return h


def satterthwaite_table(fit: LmmFit, dm: DesignMatrices) -> list[CoefTest]:
    """t tests for every fixed effect with Satterthwaite denominator df.

    Falls back to normal-reference p-values (``method="normal"``) when the
    variance parameters sit on the boundary or the Hessian is singular.
    """
    cp = CrossProducts(dm)
    est = fit.beta_hat
    se = fit.se
    tvals = est / se
    phi = _phi_from_vc(fit.vc)
    dfs = None
    if phi is not None:
        try:
            dfs = _satterthwaite_dfs(cp, fit, phi)
        except (SingularHessian, NotPositiveDefinite, DomainError):
            dfs = None
    out = []
    for j, label in enumerate(fit.labels):
        if dfs is None or not np.isfinite(dfs[j]) or dfs[j] <= 0:
            out.append(CoefTest(label, float(est[j]), float(se[j]), None, float(tvals[j]),
                                float(2 * stats.norm.sf(abs(tvals[j]))), "normal"))
        else:
            out.append(CoefTest(label, float(est[j]), float(se[j]), float(dfs[j]), float(tvals[j]),
                                float(2 * stats.t.sf(abs(tvals[j]), dfs[j])), "satterthwaite"))
    return out


def _satterthwaite_dfs(cp, fit, phi):
    crit = fit.criterion
    vc0 = fit.vc
    h = _steps(phi, vc0)
    k = phi.size

    def ll(x):
        return loglik_at(cp, _vc_from_phi(x), crit)

    def vbeta_diag(x):
        vc = _vc_from_phi(x)
        ev = evaluate(cp, relative_factor(vc))
        return vc.sigma_eps_sq * np.diag(np.linalg.inv(ev.xtvx))

    f0 = ll(phi)
    H = np.empty((k, k))
    E = np.diag(h)
    for a in range(k):
        H[a, a] = (ll(phi + E[a]) - 2 * f0 + ll(phi - E[a])) / h[a] ** 2
        for b in range(a):
            H[a, b] = H[b, a] = (ll(phi + E[a] + E[b]) - ll(phi + E[a] - E[b])
                                 - ll(phi - E[a] + E[b]) + ll(phi - E[a] - E[b])) / (4 * h[a] * h[b])
    w = np.linalg.eigvalsh(-H)
    if not np.all(w > 1e-10 * max(1.0, np.max(np.abs(w)))):
        raise SingularHessian("negative log-likelihood Hessian is not positive definite")
    A = np.linalg.inv(-H)
    G = np.empty((k, cp.p))
    for a in range(k):
        G[a] = (vbeta_diag(phi + E[a]) - vbeta_diag(phi - E[a])) / (2 * h[a])
    v = vbeta_diag(phi)
    denom = np.einsum("aj,ab,bj->j", G, A, G)
    return 2.0 * v**2 / denom


def satterthwaite_test(fit: LmmFit, dm: DesignMatrices, coefficient_index: int) -> CoefTest:
    return satterthwaite_table(fit, dm)[coefficient_index]


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------


def fit_to_dict(fit: LmmFit, dm: DesignMatrices, table: list[CoefTest] | None = None) -> dict:
    """JSON document for a frequentist fit.

    Fields: schema_version, model, criterion, n_obs, n_subjects,
    coefficients[term, estimate, se, df, t, p, p_method],
    variance_components{tau1_sq, tau2_sq, tau12, sigma_eps_sq},
    loglik{ml, reml}, convergence{converged, iterations, objective}.
    """
    table = table if table is not None else satterthwaite_table(fit, dm)
    return {
        "schema_version": SCHEMA_VERSION,
        "model": fit.spec.to_string(),
        "criterion": fit.criterion,
        "n_obs": fit.n_obs,
        "n_subjects": fit.n_subjects,
        "coefficients": [
            {"term": c.label, "estimate": c.estimate, "se": c.se, "df": c.df, "t": c.t, "p": c.p,
             "p_method": c.method}
            for c in table
        ],
        "variance_components": fit.vc.to_dict(),
        "loglik": {"ml": fit.loglik_ml, "reml": fit.loglik_reml},
        "convergence": {"converged": fit.converged, "iterations": fit.iterations,
                        "objective": fit.info.get("objective")},
    }
