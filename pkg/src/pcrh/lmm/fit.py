"""ML/REML fitting of random-intercept and random intercept+slope models."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from ..design import DesignMatrices, ModelSpec
from ..errors import ConvergenceFailure, DomainError, NotPositiveDefinite
from .likelihood import (CrossProducts, VarianceComponents, _check_criterion, evaluate,
                         loglik_at, profiled_objective, sigma_sq_hat)

REL_TOL = 1e-8
MAX_ITER = 500
N_RESTARTS = 3
LOG_LAMBDA_BOUNDS = (-28.0, 18.0)


@dataclass
class LmmFit:
    spec: ModelSpec
    criterion: str
    labels: tuple[str, ...]
    beta_hat: np.ndarray
    vc: VarianceComponents
    cov_beta: np.ndarray
    loglik_ml: float
    loglik_reml: float
    blups: np.ndarray           # (m, q)
    converged: bool
    n_obs: int
    n_subjects: int
    theta: np.ndarray           # relative covariance factor L, flattened
    iterations: int = 0
    grad_norm: float = float("nan")
    info: dict = field(default_factory=dict)

    @property
    def loglik(self) -> float:
        return self.loglik_reml if self.criterion == "REML" else self.loglik_ml

    @property
    def se(self) -> np.ndarray:
        return np.sqrt(np.diag(self.cov_beta))

    @property
    def n_variance_params(self) -> int:
        q = self.blups.shape[1]
        return q * (q + 1) // 2 + 1

    def coef(self, label: str) -> float:
        return float(self.beta_hat[self.labels.index(label)])


# ---------------------------------------------------------------------------
# random intercept (q = 1): scalar search on log(tau^2 / sigma^2)
# ---------------------------------------------------------------------------


def _scalar_objective(cp, criterion, x):
    if x is None:
        L = np.zeros((1, 1))
    else:
        L = np.array([[math.exp(0.5 * x)]])
    return profiled_objective(evaluate(cp, L), cp.N, cp.p, criterion)


def _scalar_gradient(cp, criterion, x):
    """d objective / d log(lambda), closed form."""
    lam = math.exp(x)
    ev = evaluate(cp, np.array([[math.sqrt(lam)]]))
    zz = cp.ZtZ[:, 0, 0]
    w = 1.0 / (1.0 + lam * zz)
    s = ev.ztr[:, 0]
    d_logdet_h = float(np.sum(zz * w))
    d_rss = -float(np.sum((s * w) ** 2))
    if criterion == "ML":
        g = cp.N * d_rss / ev.rss + d_logdet_h
    else:
        u = cp.ZtX[:, 0, :] * w[:, None]
        d_logdet_x = -float(np.trace(np.linalg.solve(ev.xtvx, u.T @ u)))
        g = (cp.N - cp.p) * d_rss / ev.rss + d_logdet_h + d_logdet_x
    return lam * g


def _fit_scalar(cp, criterion):
    f = lambda x: _scalar_objective(cp, criterion, x)
    lo, hi = LOG_LAMBDA_BOUNDS
    res = optimize.minimize_scalar(f, bounds=(lo, hi), method="bounded",
                                   options={"xatol": 1e-10, "maxiter": MAX_ITER})
    x, fx = float(res.x), float(res.fun)
    iters = int(res.nfev)
    # Newton polish on the analytic gradient
    for _ in range(50):
        g = _scalar_gradient(cp, criterion, x)
        h = 1e-5
        curv = (_scalar_gradient(cp, criterion, x + h) - _scalar_gradient(cp, criterion, x - h)) / (2 * h)
        if not curv > 0:
            break
        step = -g / curv
        step = max(min(step, 1.0), -1.0)
        while True:
            xn = x + step
            fn = f(xn) if lo - 5 <= xn <= hi + 5 else math.inf
            if fn <= fx + 1e-12 * abs(fx) or abs(step) < 1e-14:
                break
            step *= 0.5
        iters += 1
        if fn > fx + 1e-12 * abs(fx):
            break
        x, fx = xn, fn
        if abs(step) < 1e-12:
            break
    grad = _scalar_gradient(cp, criterion, x)
    f0 = _scalar_objective(cp, criterion, None)
    converged = bool(res.success)
    if f0 <= fx:
        return np.zeros((1, 1)), f0, iters, 0.0, converged
    return np.array([[math.exp(0.5 * x)]]), fx, iters, abs(grad), converged


# ---------------------------------------------------------------------------
# intercept + slope (q = 2): Nelder-Mead on the Cholesky factor entries
# ---------------------------------------------------------------------------


def _tri(theta):
    return np.array([[theta[0], 0.0], [theta[1], theta[2]]])


def _fit_nm(cp, criterion, z_scale):
    def f(theta):
        try:
            return profiled_objective(evaluate(cp, _tri(theta)), cp.N, cp.p, criterion)
        except (NotPositiveDefinite, np.linalg.LinAlgError):
            return math.inf

    # start from the random-intercept optimum embedded in the larger model
    cp1 = _intercept_only(cp)
    L1, _, _, _, _ = _fit_scalar(cp1, criterion)
    s = float(L1[0, 0])
    steps = np.array([0.2 * s + 0.05, 0.1 / z_scale, 0.1 / z_scale])
    x = np.array([s, 0.0, 0.0])
    fx = f(x)
    iters = 0
    success = False
    for restart in range(N_RESTARTS):
        simplex = np.vstack([x] + [x + np.eye(3)[i] * steps[i] for i in range(3)])
        res = optimize.minimize(f, x, method="Nelder-Mead",
                                options={"maxiter": MAX_ITER, "maxfev": 4 * MAX_ITER,
                                         "initial_simplex": simplex, "xatol": 1e-7,
                                         "fatol": REL_TOL * max(1.0, abs(fx))})
        iters += int(res.nit)
        improvement = fx - float(res.fun)
        if res.fun <= fx:
            x, fx = np.asarray(res.x, dtype=float), float(res.fun)
        success = bool(res.success)
        steps = steps * 0.1
        if restart > 0 and success and improvement <= REL_TOL * max(1.0, abs(fx)):
            break
    # canonical sign: nonnegative diagonal
    if x[0] < 0:
        x[0], x[1] = -x[0], -x[1]
    if x[2] < 0:
        x[2] = -x[2]
    return _tri(x), fx, iters, float("nan"), success


def _intercept_only(cp: CrossProducts) -> CrossProducts:
    sub = CrossProducts.__new__(CrossProducts)
    sub.N, sub.p, sub.q, sub.m = cp.N, cp.p, 1, cp.m
    sub.ZtZ = cp.ZtZ[:, :1, :1].copy()
    sub.ZtX = cp.ZtX[:, :1, :].copy()
    sub.Zty = cp.Zty[:, :1].copy()
    sub.XtX, sub.Xty, sub.yty = cp.XtX, cp.Xty, cp.yty
    sub.X, sub.Z, sub.y, sub.group = cp.X, cp.Z[:, :1], cp.y, cp.group
    return sub


# ---------------------------------------------------------------------------


def _vc_from_factor(L, s2, q) -> VarianceComponents:
    G = s2 * (L @ L.T)
    if q == 1:
        return VarianceComponents(float(G[0, 0]), s2)
    return VarianceComponents(float(G[0, 0]), s2, float(G[1, 1]), float(G[0, 1]))


def fit_lmm(dm: DesignMatrices, criterion: str = "REML", raise_on_failure: bool = False) -> LmmFit:
    """Fit the mixed model in ``dm`` by ML or REML.

    ``converged`` is False when the optimizer stopped at its iteration cap;
    pass ``raise_on_failure=True`` to get a ConvergenceFailure instead.
    """
    criterion = _check_criterion(criterion)
    if dm.n_obs <= dm.p + dm.q * (dm.q + 1) // 2 + 1:
        raise DomainError("too few observations for the number of parameters")
    cp = CrossProducts(dm)
    if dm.q == 1:
        L, fval, iters, gnorm, converged = _fit_scalar(cp, criterion)
    else:
        z_scale = float(np.std(dm.Z[:, 1])) or 1.0
        L, fval, iters, gnorm, converged = _fit_nm(cp, criterion, z_scale)
    if raise_on_failure and not converged:
        raise ConvergenceFailure(f"optimizer hit the iteration cap after {iters} iterations",
                                 iterations=iters, grad_norm=gnorm)

    ev = evaluate(cp, L)
    s2 = sigma_sq_hat(ev, cp.N, cp.p, criterion)
    vc = _vc_from_factor(L, s2, dm.q)
    cov_beta = s2 * np.linalg.inv(ev.xtvx)
    cov_beta = 0.5 * (cov_beta + cov_beta.T)
    blups = np.einsum("mij,mj->mi", ev.A, ev.ztr)
    return LmmFit(
        spec=dm.spec, criterion=criterion, labels=dm.labels, beta_hat=ev.beta, vc=vc,
        cov_beta=cov_beta, loglik_ml=loglik_at(cp, vc, "ML", ev), loglik_reml=loglik_at(cp, vc, "REML", ev),
        blups=blups, converged=converged, n_obs=dm.n_obs, n_subjects=dm.n_subjects,
        theta=L.ravel().copy(), iterations=iters, grad_norm=gnorm, info={"objective": fval},
    )
