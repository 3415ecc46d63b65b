"""Zero-rate calibration of the ZIP data-generating model.

The generator has ``ln mu = b0 + b1*A + b2*C`` and ``logit pi = g0 + g1*A +
g2*C`` with A ~ Bernoulli(0.5), C ~ N(0, 1). The overall Poisson level is
pinned by ``b0 = 0.8 - b1`` (``b2 = 0.2``), the zero-part intercept is tied to
the covariate slope by ``g0 = 2*g2``, and ``g2`` is solved so that P(y = 0)
hits a target.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy import special

from .distributions import QuadratureRule, gauss_hermite
from .errors import DomainError, UnreachableZeroRate

__all__ = [
    "GeneratorParams",
    "marginal_zero_rate",
    "solve_gamma2",
    "ZERO_RATE_REFERENCES",
    "COUNT_LEVEL",
    "COVARIATE_SLOPE",
]

COUNT_LEVEL = 0.8
COVARIATE_SLOPE = 0.2
ZERO_RATE_REFERENCES = ("marginal", "control")

_BRACKET = 20.0
_WIDE_BRACKET = 50.0
_MAX_BISECTIONS = 200


@dataclass(frozen=True)
class GeneratorParams:
    beta0: float
    beta1: float
    beta2: float
    gamma0: float
    gamma1: float
    gamma2: float

    @classmethod
    def constrained(cls, beta1, gamma1, gamma2, beta2=COVARIATE_SLOPE):
        """Parameters obeying ``b0 = 0.8 - b1`` and ``g0 = 2*g2``."""
        return cls(COUNT_LEVEL - beta1, beta1, beta2, 2.0 * gamma2, gamma1, gamma2)

    def satisfies_constraints(self, tol=1e-12) -> bool:
        return (
            abs(self.beta0 - (COUNT_LEVEL - self.beta1)) <= tol
            and abs(self.gamma0 - 2.0 * self.gamma2) <= tol
        )

    @property
    def count_coefficients(self) -> np.ndarray:
        return np.array([self.beta0, self.beta1, self.beta2])

    @property
    def zero_coefficients(self) -> np.ndarray:
        return np.array([self.gamma0, self.gamma1, self.gamma2])

    def to_dict(self) -> dict:
        return asdict(self)


def _arms(reference):
    if reference == "marginal":
        return (0.0, 1.0)
    if reference == "control":
        return (0.0,)
    raise DomainError(f"zero_rate_reference must be one of {ZERO_RATE_REFERENCES}")


def marginal_zero_rate(g: GeneratorParams, rule: QuadratureRule | None = None, reference: str = "marginal") -> float:
    """P(y = 0) averaged over the covariate and (by default) both arms equally.

    ``reference="control"`` averages over the control arm only.
    """
    rule = rule or gauss_hermite()
    c = rule.normal_nodes
    rates = []
    for a in _arms(reference):
        pi = special.expit(g.gamma0 + g.gamma1 * a + g.gamma2 * c)
        mu = np.exp(g.beta0 + g.beta1 * a + g.beta2 * c)
        rates.append(rule.normal_expectation(pi + (1.0 - pi) * np.exp(-mu)))
    return float(np.mean(rates))


def solve_gamma2(
    target: float,
    beta1: float,
    gamma1: float,
    rule: QuadratureRule | None = None,
    reference: str = "marginal",
    beta2: float = COVARIATE_SLOPE,
    tol: float = 1e-12,
) -> GeneratorParams:
    """Find the zero-part covariate slope that reproduces ``target``.

    Bisection over ``g2`` in [-20, 20], widened once to [-50, 50] if the
    endpoints do not straddle the target.

    Raises
    ------
    UnreachableZeroRate
        If the target lies outside the rates attained at the bracket ends.
    """
    if not 0.0 < target < 1.0:
        raise DomainError("target zero rate must lie strictly between 0 and 1")
    rule = rule or gauss_hermite()
    _arms(reference)

    def rate(g2):
        return marginal_zero_rate(GeneratorParams.constrained(beta1, gamma1, g2, beta2), rule, reference)

    for half_width in (_BRACKET, _WIDE_BRACKET):
        lo, hi = -half_width, half_width
        f_lo, f_hi = rate(lo) - target, rate(hi) - target
        if f_lo * f_hi <= 0.0:
            break
    else:
        r_lo, r_hi = f_lo + target, f_hi + target
        raise UnreachableZeroRate(target, min(r_lo, r_hi), max(r_lo, r_hi))

    if f_lo == 0.0:
        hi = lo
    for _ in range(_MAX_BISECTIONS):
        mid = 0.5 * (lo + hi)
        f_mid = rate(mid) - target
        if f_mid == 0.0 or hi - lo <= tol:
            lo = hi = mid
            break
        if (f_mid < 0.0) == (f_lo < 0.0):
            lo, f_lo = mid, f_mid
        else:
            hi = mid
    return GeneratorParams.constrained(beta1, gamma1, 0.5 * (lo + hi), beta2)
