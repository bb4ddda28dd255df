"""First-order Laplace approximations and the Gaussian predictive density."""

from __future__ import annotations

import numpy as np

from .modes import joint_mode, latent_mode
from .numerics import LOG_2PI


def gaussian_predictive_logpdf(z, mode):
    """Log-density of N(mode.mode, Omega^{-1}) at z, via the Cholesky factor
    L with L L^T = Omega. Accepts a single vector or a (B, d) batch."""
    z = np.asarray(z, dtype=float)
    L = mode.chol
    d = L.shape[0]
    const = float(np.sum(np.log(np.diag(L)))) - 0.5 * d * LOG_2PI
    diff = z - mode.mode
    if z.ndim == 1:
        w = L.T @ diff
        return const - 0.5 * float(w @ w)
    w = L.T @ diff.T
    return const - 0.5 * np.sum(w * w, axis=0)


def la_marginal_from_mode(mode):
    """Laplace marginal log-likelihood given a converged latent mode.

    Computed as h at the mode minus the Gaussian predictive log-density at
    the mode, which equals h - (1/2) log|Omega/(2 pi)| exactly.
    """
    return mode.h_at_mode - gaussian_predictive_logpdf(mode.mode, mode)


def la_marginal(model, theta, z0=None, tol=1e-9):
    """Laplace approximation to the marginal log-likelihood at theta."""
    mode = latent_mode(model, theta, z0=z0, tol=tol)
    return la_marginal_from_mode(mode)


def la_marginal_with_mode(model, theta, z0=None, tol=1e-9, mode_max_iter=200):
    mode = latent_mode(model, theta, z0=z0, tol=tol, max_iter=mode_max_iter)
    return la_marginal_from_mode(mode), mode


def la_restricted(model, tau, psi0=None, tol=1e-9):
    """Extended restricted log-likelihood at tau: Laplace approximation to
    the fixed-effects-integrated likelihood via the joint (beta, z) mode."""
    mode = joint_mode(model, tau, psi0=psi0, tol=tol)
    return la_marginal_from_mode(mode)


def la_restricted_with_mode(model, tau, psi0=None, tol=1e-9, mode_max_iter=200):
    mode = joint_mode(model, tau, psi0=psi0, tol=tol, max_iter=mode_max_iter)
    return la_marginal_from_mode(mode), mode
