"""Wald tests and effect-size summaries on fitted models."""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from scipy import special

from ..distributions import normal_two_sided_p
from ..errors import SingularInformation, ZicountError
from .fit import ZERO_PREFIX, FitResult, ModelKind

__all__ = [
    "NonConvergence",
    "WaldReport",
    "EffectKind",
    "EffectSummary",
    "wald_test",
    "zip_overall_irr",
    "effect_summaries",
]

_LINEAR = (ModelKind.LINEAR_RAW, ModelKind.LINEAR_LOG)
_ZERO_INFLATED = (ModelKind.ZIP, ModelKind.MZIP)


class NonConvergence(ZicountError, RuntimeError):
    """A test was requested on a parameter of a fit that did not converge."""


@dataclass(frozen=True)
class WaldReport:
    parameter_name: str
    estimate: float
    std_error: float
    z: float
    p_value: float
    reject: bool


def wald_test(fit: FitResult, parameter_name: str, alpha: float = 0.05) -> WaldReport:
    """Single-coefficient Wald test of ``parameter == 0``.

    Linear models use a Student-t reference with ``n - p`` degrees of
    freedom; all other models use the standard normal. The null is rejected
    when ``p < alpha`` (strict).
    """
    if not fit.usable(parameter_name):
        raise NonConvergence(f"fit did not converge; {parameter_name!r} cannot be tested")
    est = fit[parameter_name]
    var = fit.variance(parameter_name)
    if not np.isfinite(var) or var <= 0.0:
        raise SingularInformation(f"variance of {parameter_name!r} is not positive ({var})")
    se = float(np.sqrt(var))
    z = est / se
    if fit.model_kind in _LINEAR:
        p = float(2.0 * special.stdtr(fit.df_resid, -abs(z)))
    else:
        p = normal_two_sided_p(z)
    return WaldReport(parameter_name, est, se, z, p, p < alpha)


class EffectKind(str, enum.Enum):
    RR = "RR"
    OR = "OR"
    IRR = "IRR"


@dataclass(frozen=True)
class EffectSummary:
    kind: EffectKind
    value: float
    parameter_name: str = ""
    covariate_profile: tuple[float, ...] = ()


def zip_overall_irr(fit: FitResult, covariate_profile=()) -> EffectSummary:
    """Ratio of treated to control overall means under a ZIP fit.

    ``covariate_profile`` fixes the covariates beyond intercept and
    treatment; the zero-part factor only cancels when the treatment has no
    zero-part effect.
    """
    if fit.model_kind is not ModelKind.ZIP:
        raise ValueError("overall IRR is defined here for ZIP fits only")
    names = fit.count_names
    profile = np.asarray(covariate_profile, dtype=float)
    if profile.size != len(names) - 2:
        raise ValueError(f"covariate profile needs {len(names) - 2} values")
    beta1 = fit[names[1]]
    gamma = np.array([fit[ZERO_PREFIX + c] for c in names])
    base = gamma[0] + gamma[2:] @ profile
    log_ratio = beta1 + np.logaddexp(0.0, base) - np.logaddexp(0.0, base + gamma[1])
    return EffectSummary(EffectKind.IRR, float(np.exp(log_ratio)), names[1], tuple(profile))


def effect_summaries(fit: FitResult) -> list[EffectSummary]:
    """RR of the treatment coefficient and, for ZIP/MZIP, OR of its zero-part twin.

    For linear models the treatment coefficient is not a log ratio and no
    summary is produced; for the log-scale linear model exp(b1) is reported
    as an approximate RR.
    """
    if len(fit.count_names) < 2 or fit.model_kind is ModelKind.LINEAR_RAW:
        return []
    treat = fit.count_names[1]
    out = [EffectSummary(EffectKind.RR, float(np.exp(fit[treat])), treat)]
    if fit.model_kind in _ZERO_INFLATED and fit.usable(ZERO_PREFIX + treat):
        out.append(EffectSummary(EffectKind.OR, float(np.exp(fit[ZERO_PREFIX + treat])), ZERO_PREFIX + treat))
    if fit.model_kind is ModelKind.ZIP and fit.converged:
        out.append(zip_overall_irr(fit, np.zeros(len(fit.count_names) - 2)))
    return out
