"""Gaussian marginal likelihood of the mixed model, evaluated block-wise.

Per subject ``V_i = sigma^2 (I + Z_i D Z_i')`` with ``D = L L'`` the
random-effect covariance relative to the residual variance. Only q x q
per-subject systems are ever factorized, so the cost is linear in the
number of subjects.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..design import DesignMatrices
from ..errors import DomainError, NotPositiveDefinite
from ..numerics import cholesky

LOG_2PI = math.log(2.0 * math.pi)


@dataclass
class VarianceComponents:
    tau1_sq: float
    sigma_eps_sq: float
    tau2_sq: float | None = None
    tau12: float | None = None

    def __post_init__(self):
        if self.tau1_sq < 0 or self.sigma_eps_sq < 0 or (self.tau2_sq or 0.0) < 0:
            raise DomainError("variances must be nonnegative")
        if self.tau2_sq is not None:
            tau12 = self.tau12 or 0.0
            if tau12 * tau12 > self.tau1_sq * self.tau2_sq * (1 + 1e-9) + 1e-300:
                raise DomainError("random-effect covariance is not positive semidefinite")

    @property
    def G(self) -> np.ndarray:
        if self.tau2_sq is None:
            return np.array([[self.tau1_sq]])
        c = self.tau12 or 0.0
        return np.array([[self.tau1_sq, c], [c, self.tau2_sq]])

    def to_dict(self) -> dict:
        return {"tau1_sq": self.tau1_sq, "tau2_sq": self.tau2_sq, "tau12": self.tau12,
                "sigma_eps_sq": self.sigma_eps_sq}


class CrossProducts:
    """Per-subject cross-products of (Z, X, y) reused across every evaluation."""

    def __init__(self, dm: DesignMatrices):
        m, q = dm.n_subjects, dm.q
        X, Z, y, g = dm.X, dm.Z, dm.y, dm.group
        self.N, self.p, self.q, self.m = dm.n_obs, dm.p, q, m
        self.ZtZ = np.zeros((m, q, q))
        np.add.at(self.ZtZ, g, Z[:, :, None] * Z[:, None, :])
        self.ZtX = np.zeros((m, q, dm.p))
        np.add.at(self.ZtX, g, Z[:, :, None] * X[:, None, :])
        self.Zty = np.zeros((m, q))
        np.add.at(self.Zty, g, Z * y[:, None])
        self.XtX = X.T @ X
        self.Xty = X.T @ y
        self.yty = float(y @ y)
        self.X, self.Z, self.y, self.group = X, Z, y, g

    def ztr(self, r: np.ndarray) -> np.ndarray:
        """Per-subject Z_i' r_i for a residual vector in design-row order."""
        out = np.zeros((self.m, self.q))
        for k in range(self.q):
            out[:, k] = np.bincount(self.group, weights=self.Z[:, k] * r, minlength=self.m)
        return out


@dataclass
class Evaluation:
    """Quantities at one relative covariance factor ``L``."""

    beta: np.ndarray
    rss: float              # r' H^-1 r at the GLS beta (H = V / sigma^2)
    logdet_h: float         # sum_i log|I + L' Z_i'Z_i L|
    xtvx: np.ndarray        # X' H^-1 X
    logdet_xtvx: float
    A: np.ndarray           # (m, q, q): L M_i^-1 L'
    ztr: np.ndarray         # (m, q): Z_i' (y_i - X_i beta)


def evaluate(cp: CrossProducts, L: np.ndarray) -> Evaluation:
    L = np.asarray(L, dtype=float).reshape(cp.q, cp.q)
    M = np.eye(cp.q) + np.einsum("ji,mjk,kl->mil", L, cp.ZtZ, L)
    if cp.q == 1:
        Minv = 1.0 / M
        logdet_h = float(np.sum(np.log(M)))
    else:
        Mc = cholesky(M)
        logdet_h = 2.0 * float(np.sum(np.log(np.diagonal(Mc, axis1=1, axis2=2))))
        Minv = np.linalg.inv(M)
    A = np.einsum("ij,mjk,lk->mil", L, Minv, L)
    AZtX = A @ cp.ZtX                       # (m, q, p)
    xtvx = cp.XtX - np.einsum("mqi,mqj->ij", cp.ZtX, AZtX)
    xtvy = cp.Xty - np.einsum("mqi,mq->i", AZtX, cp.Zty)
    xtvx = 0.5 * (xtvx + xtvx.T)
    C = cholesky(xtvx)
    beta = np.linalg.solve(C.T, np.linalg.solve(C, xtvy))
    # from explicit residuals: y'H^-1y - beta'X'H^-1y cancels badly for near-exact fits
    r = cp.y - cp.X @ beta
    ztr = cp.ztr(r)
    rss = float(r @ r) - float(np.einsum("mq,mqk,mk->", ztr, A, ztr))
    if not rss > 0:
        raise NotPositiveDefinite("nonpositive weighted residual sum of squares")
    logdet_x = 2.0 * float(np.sum(np.log(np.diag(C))))
    return Evaluation(beta, rss, logdet_h, xtvx, logdet_x, A, ztr)


def profiled_objective(ev: Evaluation, N: int, p: int, criterion: str) -> float:
    """-2 log-likelihood with beta and sigma^2 profiled out."""
    if criterion == "ML":
        return N * (LOG_2PI + math.log(ev.rss / N) + 1.0) + ev.logdet_h
    k = N - p
    return k * (LOG_2PI + math.log(ev.rss / k) + 1.0) + ev.logdet_h + ev.logdet_xtvx


def sigma_sq_hat(ev: Evaluation, N: int, p: int, criterion: str) -> float:
    return ev.rss / (N if criterion == "ML" else N - p)


def relative_factor(vc: VarianceComponents) -> np.ndarray:
    """A square root ``L`` of G / sigma^2 (symmetric root, valid at the boundary)."""
    if not vc.sigma_eps_sq > 0:
        raise NotPositiveDefinite("residual variance must be positive")
    D = vc.G / vc.sigma_eps_sq
    if D.shape == (1, 1):
        return np.sqrt(D)
    w, U = np.linalg.eigh(D)
    return (U * np.sqrt(np.clip(w, 0.0, None))) @ U.T


def _check_criterion(criterion: str) -> str:
    c = criterion.upper()
    if c not in ("ML", "REML"):
        raise DomainError(f"criterion must be ML or REML, got {criterion!r}")
    return c


def loglik_at(cp: CrossProducts, vc: VarianceComponents, criterion: str = "REML",
              ev: Evaluation | None = None) -> float:
    criterion = _check_criterion(criterion)
    if ev is None:
        ev = evaluate(cp, relative_factor(vc))
    s2 = vc.sigma_eps_sq
    N, p = cp.N, cp.p
    if criterion == "ML":
        return -0.5 * (N * (LOG_2PI + math.log(s2)) + ev.logdet_h + ev.rss / s2)
    # log|X'V^-1 X| = log|X'H^-1 X| - p log sigma^2
    return -0.5 * ((N - p) * LOG_2PI + (N - p) * math.log(s2) + ev.logdet_h + ev.logdet_xtvx
                   + ev.rss / s2)


def profile_loglik(dm: DesignMatrices, vc: VarianceComponents, criterion: str = "REML") -> float:
    """Log-likelihood (ML) or restricted log-likelihood (REML) at ``vc``.

    The fixed effects are profiled out by generalized least squares; the
    variance components are taken as given.
    """
    if (vc.tau2_sq is None) != (dm.q == 1):
        raise DomainError("variance components do not match the random-effect design")
    return loglik_at(CrossProducts(dm), vc, criterion)
