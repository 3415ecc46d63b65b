"""Dense linear algebra helpers and a BFGS maximizer.

Every model in the package is fitted by handing a log-likelihood (value and
gradient) to :func:`maximize`; standard errors come from
:func:`observed_information` followed by :func:`invert_spd`.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import linalg

from .errors import NonFiniteObjective, SingularInformation

__all__ = [
    "OptimControls",
    "OptimResult",
    "maximize",
    "observed_information",
    "invert_spd",
]

_F_NOISE = 1e-12

Objective = Callable[[np.ndarray], "tuple[float, np.ndarray]"]


@dataclass(frozen=True)
class OptimControls:
    gtol: float = 1e-7
    ftol: float = 1e-10
    max_iter: int = 500
    max_halvings: int = 40
    armijo: float = 1e-4
    max_restarts: int = 5


@dataclass
class OptimResult:
    argmax: np.ndarray
    max_value: float
    gradient: np.ndarray
    gradient_norm: float
    iterations: int
    converged: bool
    message: str = ""


def _evaluate(objective, x):
    try:
        with np.errstate(all="ignore"):
            f, g = objective(x)
    except NonFiniteObjective:
        return -np.inf, None
    f = float(f)
    g = np.asarray(g, dtype=float)
    if not np.isfinite(f) or not np.all(np.isfinite(g)):
        return -np.inf, None
    return f, g


def _gradient_only(objective, x):
    f, g = objective(x)
    return g


def maximize(objective: Objective, start, controls: OptimControls | None = None) -> OptimResult:
    """Maximize a smooth function with BFGS and Armijo backtracking.

    Parameters
    ----------
    objective : callable
        ``objective(x) -> (value, gradient)``.
    start : array_like
        Starting point; the objective must be finite there.
    controls : OptimControls, optional
        Tolerances. Convergence requires the gradient infinity norm to be at
        most ``gtol`` and the relative change of the objective over the last
        accepted step to be at most ``ftol``.

    Returns
    -------
    OptimResult
        ``converged`` is False when the iteration cap is hit or the line
        search cannot make progress; this is not an error.

    Raises
    ------
    NonFiniteObjective
        If the objective is not finite at ``start`` or every trial step of a
        line search lands on non-finite values.
    """
    ctl = controls or OptimControls()
    x = np.array(start, dtype=float)
    f, g = _evaluate(objective, x)
    if g is None:
        raise NonFiniteObjective("objective is not finite at the starting point")
    if g.shape != x.shape:
        raise ValueError("gradient dimension does not match the parameter vector")

    n = x.size
    H = np.eye(n)
    gnorm = float(np.max(np.abs(g))) if n else 0.0
    if gnorm <= ctl.gtol:
        return OptimResult(x, f, g, gnorm, 0, True, "gradient below tolerance at start")

    def curvature_restart():
        # Replace the secant approximation by the inverse finite-difference
        # Hessian; returns None if that is not negative definite.
        try:
            info = observed_information(lambda z: _gradient_only(objective, z), x)
            return invert_spd(info)
        except (NonFiniteObjective, SingularInformation):
            return None

    first = True
    restarts = 0
    rel_change = np.inf
    message = "iteration limit reached"
    it = 0
    for it in range(1, ctl.max_iter + 1):
        # Ascent direction for the maximization problem.
        d = H @ g
        slope = float(g @ d)
        if slope <= 0.0:
            H = np.eye(n)
            d = g.copy()
            slope = float(g @ g)
        if first:
            # Keep the first trial step to unit length in the sup norm.
            d = d / max(1.0, float(np.max(np.abs(d))))
            slope = float(g @ d)

        # Below this, differences in f are round-off; judge steps by |g|.
        noise = _F_NOISE * max(1.0, abs(f))
        step = 1.0
        accepted = False
        saw_finite = False
        for _ in range(ctl.max_halvings + 1):
            x_new = x + step * d
            f_new, g_new = _evaluate(objective, x_new)
            if g_new is not None:
                saw_finite = True
                if f_new >= f + ctl.armijo * step * slope:
                    accepted = True
                    break
                if (
                    step * slope <= noise
                    and f_new >= f - noise
                    and np.max(np.abs(g_new)) < gnorm
                ):
                    accepted = True
                    break
            step *= 0.5
        if not accepted:
            if not saw_finite:
                raise NonFiniteObjective(
                    "objective not finite along the search direction after step halving"
                )
            H_new = curvature_restart() if restarts < ctl.max_restarts else None
            if H_new is None:
                message = "line search could not improve the objective"
                break
            restarts += 1
            H, first = H_new, False
            continue

        s = x_new - x
        y = g - g_new  # gradient of the negated objective changes by -y
        rel_change = abs(f_new - f) / max(1.0, abs(f))
        x, f, g = x_new, f_new, g_new
        gnorm = float(np.max(np.abs(g)))
        if gnorm <= ctl.gtol and rel_change <= ctl.ftol:
            message = "converged"
            break
        if rel_change <= ctl.ftol and restarts < ctl.max_restarts:
            # Stalled short of the gradient tolerance.
            H_new = curvature_restart()
            if H_new is not None:
                restarts += 1
                H, first = H_new, False
                continue

        sy = float(s @ y)
        if sy > 1e-12 * float(np.linalg.norm(s)) * float(np.linalg.norm(y)):
            if first:
                H = np.eye(n) * (sy / float(y @ y))
            rho = 1.0 / sy
            Hy = H @ y
            H = (
                H
                - rho * (np.outer(s, Hy) + np.outer(Hy, s))
                + (rho * rho * float(y @ Hy) + rho) * np.outer(s, s)
            )
        first = False

    converged = gnorm <= ctl.gtol and rel_change <= ctl.ftol
    if converged:
        message = "converged"
    return OptimResult(x, f, g, gnorm, it, converged, message)


def observed_information(gradient: Callable[[np.ndarray], np.ndarray], theta_hat, step: float = 1e-5) -> np.ndarray:
    """Negative Hessian of a log-likelihood by central differences of its gradient.

    The per-coordinate step is ``step * max(1, |theta_j|)``; the Jacobian is
    symmetrized before being returned.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    theta = np.asarray(theta_hat, dtype=float)
    p = theta.size
    J = np.empty((p, p))
    for j in range(p):
        h = step * max(1.0, abs(theta[j]))
        up = theta.copy()
        dn = theta.copy()
        up[j] += h
        dn[j] -= h
        with np.errstate(all="ignore"):
            g_up = np.asarray(gradient(up), dtype=float)
            g_dn = np.asarray(gradient(dn), dtype=float)
        if not (np.all(np.isfinite(g_up)) and np.all(np.isfinite(g_dn))):
            raise NonFiniteObjective("gradient not finite at a finite-difference probe")
        J[:, j] = (g_up - g_dn) / (2.0 * h)
    return -0.5 * (J + J.T)


def invert_spd(m) -> np.ndarray:
    """Invert a symmetric positive-definite matrix through its Cholesky factor."""
    a = np.asarray(m, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("expected a square matrix")
    if not np.all(np.isfinite(a)):
        raise SingularInformation("matrix has non-finite entries")
    try:
        c, lower = linalg.cho_factor(a, lower=True, check_finite=False)
    except linalg.LinAlgError as exc:
        raise SingularInformation("matrix is not positive definite") from exc
    inv = linalg.cho_solve((c, lower), np.eye(a.shape[0]), check_finite=False)
    return 0.5 * (inv + inv.T)
