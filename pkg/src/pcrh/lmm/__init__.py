from .effects import EffectReport, effect_percent, piecewise_slope_percent
from .fit import LmmFit, fit_lmm
from .inference import (CoefTest, LrtResult, fit_to_dict, fitted_values, lrt, pearson_residuals, qq_points,
                        satterthwaite_table, satterthwaite_test)
from .likelihood import VarianceComponents, profile_loglik

__all__ = [
    "CoefTest", "EffectReport", "LmmFit", "LrtResult", "VarianceComponents", "effect_percent", "fit_lmm",
    "fit_to_dict", "fitted_values", "lrt", "pearson_residuals", "piecewise_slope_percent",
    "profile_loglik", "qq_points", "satterthwaite_table", "satterthwaite_test",
]
