"""DIC and posterior predictive checking on the conditional likelihood."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..design import DesignMatrices
from ..errors import DomainError
from ..numerics import RngState
from .gibbs import GibbsChain

LOG_2PI = math.log(2.0 * math.pi)


def _conditional_means(chain: GibbsChain, dm: DesignMatrices) -> np.ndarray:
    """(R, N) array of X beta + Z b for every retained draw."""
    fixed = chain.beta @ dm.X.T
    rand = np.einsum("rnq,nq->rn", chain.b[:, dm.group, :], dm.Z)
    return fixed + rand


def deviance(y, mu, sigma_sq):
    """-2 sum log N(y | mu, sigma^2); broadcasts over leading draw axes."""
    sigma_sq = np.asarray(sigma_sq, dtype=float)
    rss = np.sum((y - mu) ** 2, axis=-1)
    n = np.shape(y)[-1]
    return n * (LOG_2PI + np.log(sigma_sq)) + rss / sigma_sq


@dataclass
class DicResult:
    dic: float
    p_d: float
    mean_deviance: float
    deviance_at_mean: float

    def to_dict(self) -> dict:
        return {"dic": self.dic, "p_d": self.p_d, "mean_deviance": self.mean_deviance,
                "deviance_at_mean": self.deviance_at_mean}


def dic(chain: GibbsChain, dm: DesignMatrices) -> DicResult:
    """DIC = mean deviance + p_D, p_D = mean deviance - deviance at the posterior means of (beta, b, sigma^2)."""
    if chain.n_retained == 0:
        raise DomainError("empty chain")
    mu = _conditional_means(chain, dm)
    dbar = float(np.mean(deviance(dm.y, mu, chain.sigma_eps_sq)))
    mu_bar = dm.X @ chain.beta.mean(axis=0) + np.sum(dm.Z * chain.b.mean(axis=0)[dm.group], axis=1)
    dhat = float(deviance(dm.y, mu_bar, chain.sigma_eps_sq.mean()))
    p_d = dbar - dhat
    return DicResult(dbar + p_d, p_d, dbar, dhat)


@dataclass
class PpcResult:
    p_b: float
    t_obs: np.ndarray
    t_rep: np.ndarray

    def to_rows(self):
        return [(k, float(o), float(r)) for k, (o, r) in enumerate(zip(self.t_obs, self.t_rep))]


def posterior_predictive_pvalue(chain: GibbsChain, dm: DesignMatrices, rng: RngState) -> PpcResult:
    """p_B = Pr(T(y_rep, theta) > T(y, theta)) with T the conditional deviance.

    One replicate data set per retained draw, simulated with that draw's
    subject effects.
    """
    if chain.n_retained < 100:
        raise DomainError("posterior predictive check needs at least 100 retained draws")
    mu = _conditional_means(chain, dm)
    sd = np.sqrt(chain.sigma_eps_sq)[:, None]
    y_rep = mu + sd * rng.standard_normal(mu.shape)
    t_obs = deviance(dm.y, mu, chain.sigma_eps_sq)
    t_rep = deviance(y_rep, mu, chain.sigma_eps_sq)
    return PpcResult(float(np.mean(t_rep > t_obs)), t_obs, t_rep)
