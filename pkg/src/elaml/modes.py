"""Latent and joint mode finding with curvature factorization.

Newton iterations with Armijo backtracking; when the negated Hessian is not
positive definite a Levenberg shift is added and escalated until the step
direction is an ascent direction. The returned Cholesky factor always
factorizes the undamped curvature at the accepted mode.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ModeError

ARMIJO_C = 1e-4
STEP_FLOOR = 1e-12
MAX_DAMPING_ESCALATIONS = 10


@dataclass
class ModeResult:
    mode: np.ndarray
    chol: np.ndarray
    h_at_mode: float
    iterations: int
    converged: bool
    grad_norm: float
    h_trace: list = field(default_factory=list, repr=False)

    @property
    def log_det_curvature(self):
        return 2.0 * float(np.sum(np.log(np.diag(self.chol))))


def _factor_curvature(hess, context):
    omega = -hess
    try:
        return np.linalg.cholesky(omega)
    except np.linalg.LinAlgError:
        raise ModeError(
            f"{context}: curvature is not positive definite at the mode; "
            "the model may be rank-deficient (e.g. collinear design columns)"
        ) from None


def _damped_direction(hess, grad, context, last_iterate):
    omega = -hess
    base = 1e-8 * max(float(np.mean(np.abs(np.diag(omega)))), 1e-12)
    lam = 0.0
    for _ in range(MAX_DAMPING_ESCALATIONS + 1):
        try:
            L = np.linalg.cholesky(omega + lam * np.eye(omega.shape[0]))
            step = np.linalg.solve(L.T, np.linalg.solve(L, grad))
            return step
        except np.linalg.LinAlgError:
            lam = base if lam == 0.0 else lam * 10.0
    raise ModeError(
        f"{context}: negated Hessian stayed non-positive-definite after "
        f"{MAX_DAMPING_ESCALATIONS} damping escalations",
        last_iterate=last_iterate,
    )


def _newton_maximize(value, value_grad_hess, x0, tol, max_iter, context):
    x = np.asarray(x0, dtype=float).copy()
    h, grad, hess = value_grad_hess(x)
    if not np.isfinite(h):
        raise ModeError(f"{context}: objective not finite at the start point", last_iterate=x)
    trace = [h]
    iterations = 0
    while True:
        gnorm = float(np.max(np.abs(grad))) if grad.size else 0.0
        if gnorm <= tol * (1.0 + abs(h)):
            L = _factor_curvature(hess, context)
            return ModeResult(
                mode=x,
                chol=L,
                h_at_mode=float(h),
                iterations=iterations,
                converged=True,
                grad_norm=gnorm,
                h_trace=trace,
            )
        if iterations >= max_iter:
            raise ModeError(
                f"{context}: no convergence after {max_iter} iterations "
                f"(|grad|={gnorm:.3e})",
                last_iterate=x,
                iterations=iterations,
            )
        step = _damped_direction(hess, grad, context, x)
        slope = float(grad @ step)
        if slope <= 0.0:
            raise ModeError(
                f"{context}: search direction is not an ascent direction",
                last_iterate=x,
                iterations=iterations,
            )
        alpha = 1.0
        accepted = False
        while alpha >= STEP_FLOOR:
            x_new = x + alpha * step
            h_new = value(x_new)
            if np.isfinite(h_new) and h_new >= h + ARMIJO_C * alpha * slope:
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            raise ModeError(
                f"{context}: line search stalled below step floor",
                last_iterate=x,
                iterations=iterations,
            )
        x = x_new
        h, grad, hess = value_grad_hess(x)
        trace.append(float(h))
        iterations += 1


def latent_mode(model, theta, z0=None, tol=1e-9, max_iter=200):
    """Maximize h(theta, .) over the latent vector."""
    start = np.zeros(model.d) if z0 is None else np.asarray(z0, dtype=float)

    def value(z):
        try:
            return model.h_loglik(theta, z)
        except Exception:
            return -np.inf

    def vgh(z):
        h = model.h_loglik(theta, z)
        grad, hess = model.dz(theta, z)
        return h, grad, hess

    return _newton_maximize(
        value, vgh, start, tol, max_iter, f"latent_mode[{model.family}]"
    )


def joint_mode(model, tau, psi0=None, tol=1e-9, max_iter=200):
    """Maximize h(tau, beta, .) jointly over psi = (beta, z) at fixed tau.

    `tau` is on the natural scale. A Cholesky pre-check of X'X rejects
    rank-deficient designs with an explicit error.
    """
    tau = np.asarray(tau, dtype=float)
    X = model.X
    try:
        np.linalg.cholesky(X.T @ X)
    except np.linalg.LinAlgError:
        raise ModeError(
            f"joint_mode[{model.family}]: design matrix is rank-deficient "
            "(Cholesky of X'X failed); drop collinear columns"
        ) from None
    if psi0 is None:
        start = np.zeros(model.p + model.d)
    else:
        start = np.asarray(psi0, dtype=float)

    def value(psi):
        try:
            return model.h_psi(tau, psi)
        except Exception:
            return -np.inf

    def vgh(psi):
        h = model.h_psi(tau, psi)
        grad, hess = model.dpsi(tau, psi)
        return h, grad, hess

    return _newton_maximize(
        value, vgh, start, tol, max_iter, f"joint_mode[{model.family}]"
    )
