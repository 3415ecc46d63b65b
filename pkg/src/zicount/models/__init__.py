"""Count and linear regression models with Wald inference."""
from .data import INTERCEPT, Dataset, read_csv
from .fit import (
    BOUNDARY_ZERO_PART,
    DISPERSION_AT_BOUND,
    FitResult,
    ModelKind,
    ModelPrediction,
    fit_linear,
    fit_model,
    fit_mzip,
    fit_nb,
    fit_poisson,
    fit_zip,
    predict,
)
from .inference import (
    EffectKind,
    EffectSummary,
    NonConvergence,
    WaldReport,
    effect_summaries,
    wald_test,
    zip_overall_irr,
)
from .likelihood import loglik_mzip, loglik_nb, loglik_poisson, loglik_zip

__all__ = [
    "INTERCEPT",
    "Dataset",
    "read_csv",
    "BOUNDARY_ZERO_PART",
    "DISPERSION_AT_BOUND",
    "FitResult",
    "ModelKind",
    "ModelPrediction",
    "fit_linear",
    "fit_model",
    "fit_mzip",
    "fit_nb",
    "fit_poisson",
    "fit_zip",
    "predict",
    "EffectKind",
    "EffectSummary",
    "NonConvergence",
    "WaldReport",
    "effect_summaries",
    "wald_test",
    "zip_overall_irr",
    "loglik_mzip",
    "loglik_nb",
    "loglik_poisson",
    "loglik_zip",
]
