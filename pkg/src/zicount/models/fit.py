"""Maximum-likelihood and least-squares fitting for the six model kinds."""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import special

from ..errors import NonFiniteObjective, SingularInformation
from ..linalg_opt import OptimControls, invert_spd, maximize, observed_information
from .data import Dataset
from .likelihood import (
    LN_K_BOUND,
    loglik_mzip,
    loglik_nb,
    loglik_poisson,
    loglik_zip,
)

__all__ = [
    "ModelKind",
    "FitResult",
    "ModelPrediction",
    "DISPERSION_AT_BOUND",
    "BOUNDARY_ZERO_PART",
    "fit_linear",
    "fit_poisson",
    "fit_nb",
    "fit_zip",
    "fit_mzip",
    "fit_model",
    "predict",
    "starting_values",
]

DISPERSION_AT_BOUND = "DispersionAtBound"
BOUNDARY_ZERO_PART = "BoundaryZeroPart"
ZERO_PREFIX = "zero:"
LN_K = "ln_k"
SIGMA2 = "sigma2"
INFO_STEP = 1e-5


class ModelKind(str, enum.Enum):
    LINEAR_RAW = "linear-raw"
    LINEAR_LOG = "linear-log"
    POISSON = "poisson"
    NB = "nb"
    ZIP = "zip"
    MZIP = "mzip"


@dataclass
class FitResult:
    """Estimates, covariance and diagnostics for one fitted model.

    ``coefficients`` and ``covariance`` are indexed by ``names``. Zero-part
    coefficients of ZIP/MZIP are prefixed with ``"zero:"``.
    """

    model_kind: ModelKind
    names: tuple[str, ...]
    coefficients: np.ndarray
    covariance: np.ndarray
    loglik: float
    converged: bool
    n_obs: int
    flags: frozenset = frozenset()
    iterations: int = 0
    gradient_norm: float = 0.0
    df_resid: int | None = None
    count_names: tuple[str, ...] = field(default=())

    @property
    def n_params(self) -> int:
        return len(self.names)

    @property
    def params(self) -> dict[str, float]:
        return dict(zip(self.names, map(float, self.coefficients)))

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise KeyError(f"{name!r} is not a parameter of this {self.model_kind.value} fit") from None

    def __getitem__(self, name: str) -> float:
        return float(self.coefficients[self.index(name)])

    def variance(self, name: str) -> float:
        i = self.index(name)
        return float(self.covariance[i, i])

    def std_error(self, name: str) -> float:
        return float(np.sqrt(self.variance(name)))

    def usable(self, name: str) -> bool:
        """Whether the estimate of ``name`` is trustworthy enough to test.

        A ZIP/MZIP fit that hit the zero-part boundary is not converged, but
        its count block is the (well defined) Poisson-limit estimate.
        """
        if self.converged:
            return True
        return BOUNDARY_ZERO_PART in self.flags and name in self.count_names


@dataclass(frozen=True)
class ModelPrediction:
    """Per-row fitted means; ``poisson_mean`` and ``zero_prob`` only for ZIP/MZIP."""

    overall_mean: np.ndarray
    poisson_mean: np.ndarray | None = None
    zero_prob: np.ndarray | None = None


def _zero_names(d: Dataset):
    return tuple(ZERO_PREFIX + c for c in d.column_names)


def _newton(loglik_grad_hess, theta, max_iter=25, tol=1e-8, bound=15.0):
    """Plain Newton iterations; only used to produce starting values."""
    for _ in range(max_iter):
        g, H = loglik_grad_hess(theta)
        try:
            step = np.linalg.solve(H, g)
        except np.linalg.LinAlgError:
            break
        if not np.all(np.isfinite(step)):
            break
        theta = np.clip(theta + step, -bound, bound)
        if np.max(np.abs(step)) < tol:
            break
    return theta


def _poisson_start(X, y):
    """Poisson regression coefficients by Newton from ln(mean(y) + 0.1)."""
    theta = np.zeros(X.shape[1])
    theta[0] = np.log(y.mean() + 0.1)

    def gh(b):
        v = np.exp(np.minimum(X @ b, 50.0))
        return X.T @ (y - v), (X.T * v) @ X

    return _newton(gh, theta)


def _logistic_start(X, z):
    """Logistic regression of 0/1 ``z`` on ``X`` by Newton from zero."""

    def gh(b):
        p = special.expit(X @ b)
        return X.T @ (z - p), (X.T * (p * (1.0 - p))) @ X

    return _newton(gh, np.zeros(X.shape[1]))


def starting_values(kind: ModelKind | str, d: Dataset) -> np.ndarray:
    """Default optimizer start for a likelihood-based model.

    Poisson and NB start from ``ln(mean(y) + 0.1)`` with zero slopes (and
    ln k = 0). ZIP and MZIP take the zero block from a logistic regression of
    the zero indicator and the count block from a Poisson regression on the
    positive rows (ZIP) or all rows (MZIP).
    """
    kind = ModelKind(kind)
    if kind in (ModelKind.POISSON, ModelKind.NB):
        start = np.zeros(d.p + (kind is ModelKind.NB))
        start[0] = np.log(d.yf.mean() + 0.1)
        return start
    if kind not in (ModelKind.ZIP, ModelKind.MZIP):
        raise ValueError(f"{kind.value} is not fitted by maximum likelihood")
    gamma = _logistic_start(d.X, d.is_zero.astype(float))
    pos = ~d.is_zero
    if kind is ModelKind.ZIP and pos.sum() >= d.p:
        beta = _poisson_start(d.X[pos], d.yf[pos])
    else:
        beta = _poisson_start(d.X, d.yf)
    return np.concatenate((beta, gamma))


def _refine(objective, res, admissible=None):
    """One Newton step from the optimizer's answer, plus the information there.

    BFGS stops once the gradient is below its tolerance, which leaves an
    error of about gtol / information in the estimate. The step reuses the
    information needed for the covariance anyway and is kept only if it
    lowers the gradient without losing objective value beyond round-off.
    Returns ``(theta, value, gradient, information)``.
    """
    theta, f, g = res.argmax, res.max_value, res.gradient
    grad = lambda t: objective(t)[1]  # noqa: E731
    info = observed_information(grad, theta, INFO_STEP)
    try:
        cand = theta + invert_spd(info) @ g
    except SingularInformation:
        return theta, f, g, info
    if admissible is not None and not admissible(cand):
        return theta, f, g, info
    try:
        with np.errstate(all="ignore"):
            f_new, g_new = objective(cand)
    except NonFiniteObjective:
        return theta, f, g, info
    if (
        np.isfinite(f_new)
        and np.all(np.isfinite(g_new))
        and f_new >= f - 1e-12 * max(1.0, abs(f))
        and np.max(np.abs(g_new)) < np.max(np.abs(g))
    ):
        return cand, float(f_new), g_new, observed_information(grad, cand, INFO_STEP)
    return theta, f, g, info


def _gnorm(g):
    return float(np.max(np.abs(g))) if np.size(g) else 0.0


def _ml_fit(kind, loglik, d, start, names, controls, count_names, flags=frozenset()):
    objective = lambda t: loglik(t, d)  # noqa: E731
    res = maximize(objective, start, controls)
    theta, value, g, info = _refine(objective, res)
    return FitResult(
        model_kind=kind,
        names=names,
        coefficients=theta,
        covariance=invert_spd(info),
        loglik=value,
        converged=res.converged,
        n_obs=d.n,
        flags=frozenset(flags),
        iterations=res.iterations,
        gradient_norm=_gnorm(g),
        count_names=count_names,
    )


def fit_linear(d: Dataset, transform: str = "raw") -> FitResult:
    """Ordinary least squares on ``y`` (``"raw"``) or ``ln(y + 1)`` (``"log1p"``).

    The covariance block of the coefficients is ``s2 (X'X)^-1`` with
    ``s2 = RSS / (n - p)``; the final parameter is the residual variance,
    whose variance is reported as ``2 s2**2 / (n - p)``. ``loglik`` is the
    Gaussian log-likelihood at the least-squares solution with the maximum
    likelihood variance ``RSS / n``.
    """
    if transform == "raw":
        kind, target = ModelKind.LINEAR_RAW, d.yf
    elif transform == "log1p":
        kind, target = ModelKind.LINEAR_LOG, np.log1p(d.yf)
    else:
        raise ValueError(f"unknown transform {transform!r}")
    XtX_inv = invert_spd(d.X.T @ d.X)
    beta = XtX_inv @ (d.X.T @ target)
    resid = target - d.X @ beta
    rss = float(resid @ resid)
    df = d.n - d.p
    s2 = rss / df if df > 0 else np.nan
    p = d.p
    cov = np.zeros((p + 1, p + 1))
    cov[:p, :p] = s2 * XtX_inv
    cov[p, p] = 2.0 * s2**2 / df if df > 0 else np.nan
    if rss > 0:
        loglik = -0.5 * d.n * (np.log(2.0 * np.pi * rss / d.n) + 1.0)
    else:
        loglik = np.inf
    return FitResult(
        model_kind=kind,
        names=(*d.column_names, SIGMA2),
        coefficients=np.append(beta, s2),
        covariance=cov,
        loglik=float(loglik),
        converged=True,
        n_obs=d.n,
        df_resid=df,
        count_names=tuple(d.column_names),
    )


def fit_poisson(d: Dataset, start=None, controls: OptimControls | None = None) -> FitResult:
    """Poisson regression with a log link.

    Raises
    ------
    SingularInformation
        If the observed information at the estimate is not positive definite.
    """
    if start is None:
        start = starting_values(ModelKind.POISSON, d)
    names = tuple(d.column_names)
    return _ml_fit(ModelKind.POISSON, loglik_poisson, d, start, names, controls, names)


def _alpha_score(d: Dataset, beta):
    """Score for the NB2 overdispersion 1/k at the Poisson limit."""
    v = np.exp(d.X @ beta)
    return 0.5 * float(((d.yf - v) ** 2 - d.yf).sum())


def fit_nb(d: Dataset, start=None, controls: OptimControls | None = None) -> FitResult:
    """NB2 regression, jointly over the coefficients and ln k.

    When the sample shows no overdispersion (the score for 1/k at the
    Poisson estimate is not positive) or the joint fit runs into the upper
    clamp on ln k, the estimate is placed at ln k = 30 and the fit carries the
    ``DispersionAtBound`` flag. The count-block covariance is then evaluated
    at the bound and ln k gets infinite variance.
    """
    names = (*d.column_names, LN_K)
    count_names = tuple(d.column_names)
    beta_pois = _poisson_start(d.X, d.yf)
    if _alpha_score(d, beta_pois) <= 0.0:
        return _nb_at_bound(d, beta_pois, names, count_names, controls)
    if start is None:
        start = starting_values(ModelKind.NB, d)
    objective = lambda t: loglik_nb(t, d)  # noqa: E731
    res = maximize(objective, start, controls)
    if res.argmax[-1] >= LN_K_BOUND:
        return _nb_at_bound(d, res.argmax[:-1], names, count_names, controls)
    theta, value, g, info = _refine(objective, res, lambda t: abs(t[-1]) < LN_K_BOUND)
    return FitResult(
        model_kind=ModelKind.NB,
        names=names,
        coefficients=theta,
        covariance=invert_spd(info),
        loglik=value,
        converged=res.converged,
        n_obs=d.n,
        iterations=res.iterations,
        gradient_norm=_gnorm(g),
        count_names=count_names,
    )


def _nb_at_bound(d, beta_start, names, count_names, controls):
    def obj(b):
        value, grad = loglik_nb(np.append(b, LN_K_BOUND), d)
        return value, grad[:-1]

    res = maximize(obj, beta_start, controls)
    beta, value, g, info = _refine(obj, res)
    p = d.p
    cov = np.zeros((p + 1, p + 1))
    cov[:p, :p] = invert_spd(info)
    cov[p, p] = np.inf
    return FitResult(
        model_kind=ModelKind.NB,
        names=names,
        coefficients=np.append(beta, LN_K_BOUND),
        covariance=cov,
        loglik=value,
        converged=res.converged,
        n_obs=d.n,
        flags=frozenset({DISPERSION_AT_BOUND}),
        iterations=res.iterations,
        gradient_norm=_gnorm(g),
        count_names=count_names,
    )


# An information eigenvalue below this fraction of the largest is flat.
FLAT_EIGENVALUE = 1e-8
# Flat directions loading less than this on the count block leave it identified.
COUNT_BLOCK_LOADING = 1e-4


def _zero_part_boundary(kind, d: Dataset, names, count_names, controls):
    """Poisson-limit result for data without zeros (pi = 0 at the MLE)."""
    p = d.p
    pois = fit_poisson(d, controls=controls)
    cov = np.full((2 * p, 2 * p), np.nan)
    cov[:p, :p] = pois.covariance
    return FitResult(
        model_kind=kind,
        names=names,
        coefficients=np.concatenate((pois.coefficients, np.full(p, -np.inf))),
        covariance=cov,
        loglik=pois.loglik,
        converged=False,
        n_obs=d.n,
        flags=frozenset({BOUNDARY_ZERO_PART}),
        iterations=pois.iterations,
        gradient_norm=pois.gradient_norm,
        count_names=count_names,
    )


def _count_block_covariance(info, p):
    """Count-block covariance when the zero block of ``info`` is singular.

    Valid only if every flat direction lies in the zero block; the zero
    block is then profiled out with a pseudo-inverse. Returns None otherwise.
    """
    ev, vecs = np.linalg.eigh(info)
    if ev[-1] <= 0.0:
        return None
    flat = ev <= FLAT_EIGENVALUE * ev[-1]
    if np.abs(vecs[:p, flat]).max(initial=0.0) > COUNT_BLOCK_LOADING:
        return None
    i_cc, i_cz, i_zz = info[:p, :p], info[:p, p:], info[p:, p:]
    i_zz_pinv = np.linalg.pinv(i_zz, rcond=FLAT_EIGENVALUE, hermitian=True)
    try:
        return invert_spd(i_cc - i_cz @ i_zz_pinv @ i_cz.T)
    except SingularInformation:
        return None


def _zero_inflated(kind, loglik, d: Dataset, start, controls):
    names = (*d.column_names, *_zero_names(d))
    count_names = tuple(d.column_names)
    if not d.is_zero.any():
        return _zero_part_boundary(kind, d, names, count_names, controls)
    if start is None:
        start = starting_values(kind, d)
    objective = lambda t: loglik(t, d)  # noqa: E731
    res = maximize(objective, start, controls)
    theta, value, g, info = _refine(objective, res)
    flags = frozenset()
    converged = res.converged
    try:
        cov = invert_spd(info)
    except SingularInformation:
        count_cov = _count_block_covariance(info, d.p)
        if count_cov is None:
            raise
        cov = np.full_like(info, np.nan)
        cov[: d.p, : d.p] = count_cov
        flags = frozenset({BOUNDARY_ZERO_PART})
        converged = False
    return FitResult(
        model_kind=kind,
        names=names,
        coefficients=theta,
        covariance=cov,
        loglik=value,
        converged=converged,
        n_obs=d.n,
        flags=flags,
        iterations=res.iterations,
        gradient_norm=_gnorm(g),
        count_names=count_names,
    )


def fit_zip(d: Dataset, start=None, controls: OptimControls | None = None) -> FitResult:
    """Zero-inflated Poisson regression by direct maximization.

    When the zero part is unidentified the result has ``converged=False``
    and the ``BoundaryZeroPart`` flag, but its count block stays usable:

    * with no observed zeros the count block is the Poisson estimate (the
      limit as the zero probability goes to 0);
    * when the estimate drives fitted zero probabilities to 0 or 1 and the
      information is singular only along zero-part directions, the
      count-block covariance profiles the zero part out.

    Raises
    ------
    SingularInformation
        If the information matrix is singular in any other way.
    """
    return _zero_inflated(ModelKind.ZIP, loglik_zip, d, start, controls)


def fit_mzip(d: Dataset, start=None, controls: OptimControls | None = None) -> FitResult:
    """Marginalized ZIP regression; the count block models the overall mean."""
    return _zero_inflated(ModelKind.MZIP, loglik_mzip, d, start, controls)


_FITTERS: dict[ModelKind, Callable[..., FitResult]] = {
    ModelKind.POISSON: fit_poisson,
    ModelKind.NB: fit_nb,
    ModelKind.ZIP: fit_zip,
    ModelKind.MZIP: fit_mzip,
}


def fit_model(kind: ModelKind | str, d: Dataset, start=None) -> FitResult:
    kind = ModelKind(kind)
    if kind is ModelKind.LINEAR_RAW:
        return fit_linear(d, "raw")
    if kind is ModelKind.LINEAR_LOG:
        return fit_linear(d, "log1p")
    return _FITTERS[kind](d, start=start)


def predict(fit: FitResult, X) -> ModelPrediction:
    """Fitted means for design rows ``X`` (same columns as the fitted data)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    p = len(fit.count_names)
    beta = fit.coefficients[:p]
    eta = X @ beta
    kind = fit.model_kind
    if kind is ModelKind.LINEAR_RAW:
        return ModelPrediction(eta)
    if kind is ModelKind.LINEAR_LOG:
        # back-transformed fitted value, not the mean of y
        return ModelPrediction(np.expm1(eta))
    if kind in (ModelKind.POISSON, ModelKind.NB):
        return ModelPrediction(np.exp(eta))
    gamma = fit.coefficients[p: 2 * p]
    with np.errstate(over="ignore"):
        eta_z = X @ gamma
    pi = special.expit(eta_z)
    soft = np.logaddexp(0.0, eta_z)
    if kind is ModelKind.ZIP:
        mu = np.exp(eta)
        v = np.exp(eta - soft)
    else:
        v = np.exp(eta)
        mu = np.exp(eta + soft)
    return ModelPrediction(v, mu, pi)
