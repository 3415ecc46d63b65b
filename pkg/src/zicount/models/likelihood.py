"""Log-likelihoods and analytic gradients for the count models.

Each ``loglik_*`` function takes a parameter vector and a :class:`Dataset` and
returns ``(value, gradient)``. Overflowing linear predictors raise
:class:`NonFiniteObjective`, which the optimizer treats as a rejected step.
"""
from __future__ import annotations

import numpy as np
from scipy import special

from ..errors import NonFiniteObjective
from .data import Dataset

# exp() of anything above this exceeds 1e300
MAX_ETA = np.log(1e300)
LN_K_BOUND = 30.0


def _exp_eta(eta):
    if eta.size and eta.max() > MAX_ETA:
        raise NonFiniteObjective("linear predictor overflows the mean")
    return np.exp(eta)


def _split(theta, d: Dataset, size):
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (size,):
        raise ValueError(f"expected {size} parameters, got {theta.shape}")
    return theta


def loglik_poisson(theta, d: Dataset):
    beta = _split(theta, d, d.p)
    eta = d.X @ beta
    v = _exp_eta(eta)
    value = float(d.yf @ eta - v.sum()) - d.log_factorial_sum
    return value, d.X.T @ (d.yf - v)


def loglik_logistic(theta, X, z):
    """Bernoulli log-likelihood of 0/1 outcomes ``z`` under a logit link."""
    eta = X @ theta
    value = float(z @ eta - np.logaddexp(0.0, eta).sum())
    return value, X.T @ (z - special.expit(eta))


def _rising_tables(y, k):
    """Per-row ``sum_{j<y} log1p(j/k)`` and ``sum_{j<y} 1/(k+j)``.

    Equivalent to lgamma(y+k) - lgamma(k) - y*log(k) and digamma(y+k) -
    digamma(k), but without the cancellation that ruins those for large k.
    """
    top = int(y.max()) if y.size else 0
    j = np.arange(top, dtype=float)
    log_terms = np.concatenate(([0.0], np.cumsum(np.log1p(j / k))))
    inv_terms = np.concatenate(([0.0], np.cumsum(1.0 / (k + j))))
    return log_terms[y], inv_terms[y]


def loglik_nb(theta, d: Dataset):
    """NB2 log-likelihood; the last entry of ``theta`` is ln k.

    ln k is clamped to [-30, 30]; outside that range the objective is flat
    in ln k.
    """
    theta = _split(theta, d, d.p + 1)
    beta, ln_k_raw = theta[:-1], theta[-1]
    ln_k = min(max(ln_k_raw, -LN_K_BOUND), LN_K_BOUND)
    k = np.exp(ln_k)
    eta = d.X @ beta
    v = _exp_eta(eta)
    y = d.yf
    rise_log, rise_inv = _rising_tables(d.y, k)
    log1p_vk = np.log1p(v / k)
    value = float(rise_log.sum() - ((k + y) * log1p_vk).sum() + y @ eta) - d.log_factorial_sum
    score_eta = k * (y - v) / (k + v)
    score_k = rise_inv - log1p_vk + (v - y) / (k + v)
    grad = np.empty(d.p + 1)
    grad[:-1] = d.X.T @ score_eta
    grad[-1] = k * score_k.sum() if -LN_K_BOUND < ln_k_raw < LN_K_BOUND else 0.0
    return value, grad


def _zip_kernel(eta_c, eta_z, d: Dataset):
    """Zero-inflated Poisson log-likelihood on the (ln mu, logit pi) scale.

    Returns the total and the per-row derivatives with respect to both
    linear predictors. An infinite Poisson mean is legitimate on a zero row
    (the zero is then structural with certainty) but not on a positive row.
    """
    zero = d.is_zero
    pos = ~zero
    if pos.any() and eta_c[pos].max() > MAX_ETA:
        raise NonFiniteObjective("linear predictor overflows the mean")
    with np.errstate(over="ignore"):
        mu = np.exp(eta_c)
    soft = np.logaddexp(0.0, eta_z)  # -ln(1 - pi)
    pi = special.expit(eta_z)
    y = d.yf

    # zero rows: ln(pi + (1-pi) e^{-mu}) = logaddexp(eta_z, -mu) - softplus(eta_z)
    mu0, ez0 = mu[zero], eta_z[zero]
    ll_zero = np.logaddexp(ez0, -mu0).sum()
    ll_pos = (y[pos] * eta_c[pos] - mu[pos]).sum()
    value = float(ll_zero + ll_pos - soft.sum()) - d.log_factorial_sum

    # P(structural | y = 0) and mu * P(Poisson | y = 0), the latter on the
    # log scale so that mu = inf gives 0 rather than inf * 0.
    w = special.expit(ez0 + mu0)
    mu_poisson = np.exp(eta_c[zero] + special.log_expit(-ez0 - mu0))
    d_c = np.empty_like(eta_c)
    d_z = -pi
    d_c[zero] = -mu_poisson
    d_c[pos] = y[pos] - mu[pos]
    d_z[zero] += w
    return value, d_c, d_z, pi


def loglik_zip(theta, d: Dataset):
    """ZIP log-likelihood; ``theta`` is the count block then the zero block."""
    theta = _split(theta, d, 2 * d.p)
    beta, gamma = theta[: d.p], theta[d.p:]
    value, d_c, d_z, _ = _zip_kernel(d.X @ beta, d.X @ gamma, d)
    return value, np.concatenate((d.X.T @ d_c, d.X.T @ d_z))


def loglik_mzip(theta, d: Dataset):
    """Marginalized ZIP log-likelihood.

    The count block models the overall mean ``v``; the Poisson-part mean is
    ``v * (1 + exp(x'gamma))``, which is ZIP with ln mu = x'beta +
    softplus(x'gamma).
    """
    theta = _split(theta, d, 2 * d.p)
    beta, gamma = theta[: d.p], theta[d.p:]
    eta_z = d.X @ gamma
    eta_c = d.X @ beta + np.logaddexp(0.0, eta_z)
    value, d_c, d_z, pi = _zip_kernel(eta_c, eta_z, d)
    return value, np.concatenate((d.X.T @ d_c, d.X.T @ (d_z + d_c * pi)))
