from .criteria import DicResult, PpcResult, deviance, dic, posterior_predictive_pvalue
from .diagnostics import ParamDiagnostics, chain_diagnostics, series_diagnostics
from .gibbs import (GibbsChain, GibbsState, PriorHyperparams, beta_conditional, cond_draw_b, cond_draw_beta,
                    cond_draw_sigma_eps_sq, cond_draw_tau1_sq, cond_draw_tau_sq, retained_count, run_gibbs)
from .io import summary_dict, write_chain_csv, write_effects_csv

__all__ = [
    "DicResult", "GibbsChain", "GibbsState", "ParamDiagnostics", "PpcResult", "PriorHyperparams",
    "beta_conditional", "chain_diagnostics", "cond_draw_b", "cond_draw_beta", "cond_draw_sigma_eps_sq",
    "cond_draw_tau1_sq", "cond_draw_tau_sq", "deviance", "dic", "posterior_predictive_pvalue",
    "retained_count", "run_gibbs", "series_diagnostics", "summary_dict", "write_chain_csv",
    "write_effects_csv",
]
