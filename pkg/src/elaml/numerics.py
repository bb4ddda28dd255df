"""Finite differences and small linear algebra helpers."""

from __future__ import annotations

import numpy as np
from scipy.linalg import cho_solve, cholesky, solve_triangular

EPS = np.finfo(float).eps
LOG_2PI = float(np.log(2.0 * np.pi))


def fd_steps(x, rel=EPS ** (1.0 / 3.0)):
    """Per-coordinate central-difference steps rel * max(1, |x_k|)."""
    x = np.asarray(x, dtype=float)
    return rel * np.maximum(1.0, np.abs(x))


def central_fd_grad_hess(f, x, rel=EPS ** (1.0 / 3.0)):
    """Central-difference gradient and symmetrized Hessian of f at x.

    f may return a scalar or an array of shape (B,); the outputs gain the
    corresponding leading shape. The Hessian is (H + H^T)/2 by construction.
    """
    x = np.asarray(x, dtype=float)
    m = x.size
    h = fd_steps(x, rel)
    f0 = np.asarray(f(x), dtype=float)
    shape = f0.shape

    fp = np.empty(shape + (m,))
    fm = np.empty(shape + (m,))
    for k in range(m):
        xp = x.copy()
        xp[k] += h[k]
        xm = x.copy()
        xm[k] -= h[k]
        fp[..., k] = f(xp)
        fm[..., k] = f(xm)

    grad = (fp - fm) / (2.0 * h)
    hess = np.empty(shape + (m, m))
    for k in range(m):
        hess[..., k, k] = (fp[..., k] - 2.0 * f0 + fm[..., k]) / h[k] ** 2
    for k in range(m):
        for l in range(k + 1, m):
            xpp = x.copy()
            xpp[[k, l]] += [h[k], h[l]]
            xpm = x.copy()
            xpm[[k, l]] += [h[k], -h[l]]
            xmp = x.copy()
            xmp[[k, l]] += [-h[k], h[l]]
            xmm = x.copy()
            xmm[[k, l]] += [-h[k], -h[l]]
            v = (
                np.asarray(f(xpp))
                - np.asarray(f(xpm))
                - np.asarray(f(xmp))
                + np.asarray(f(xmm))
            ) / (4.0 * h[k] * h[l])
            hess[..., k, l] = v
            hess[..., l, k] = v
    hess = 0.5 * (hess + np.swapaxes(hess, -1, -2))
    return grad, hess


def central_fd_grad(f, x, rel=EPS ** (1.0 / 3.0)):
    """Central-difference gradient of scalar-or-batch f at x."""
    x = np.asarray(x, dtype=float)
    m = x.size
    h = fd_steps(x, rel)
    f0 = np.asarray(f(x), dtype=float)
    grad = np.empty(f0.shape + (m,))
    for k in range(m):
        xp = x.copy()
        xp[k] += h[k]
        xm = x.copy()
        xm[k] -= h[k]
        grad[..., k] = (np.asarray(f(xp)) - np.asarray(f(xm))) / (2.0 * h[k])
    return grad


def chol_lower(mat, jitter_scale=None, max_tries=4):
    """Lower Cholesky factor with escalating-jitter retries.

    Returns (L, jitter_used). Raises np.linalg.LinAlgError when the matrix
    stays non-PD after max_tries escalations.
    """
    mat = np.asarray(mat, dtype=float)
    scale = jitter_scale if jitter_scale is not None else np.mean(np.abs(np.diag(mat)))
    jit = 0.0
    for attempt in range(max_tries):
        try:
            return np.linalg.cholesky(mat + jit * np.eye(mat.shape[0])), jit
        except np.linalg.LinAlgError:
            jit = scale * 10.0 ** (-10 + 2 * attempt)
    raise np.linalg.LinAlgError("matrix not positive definite after jitter retries")


def solve_lower(L, b):
    return solve_triangular(L, b, lower=True)


def solve_lower_t(L, b):
    return solve_triangular(L, b, lower=True, trans="T")


def spd_inverse(mat):
    """Inverse of a symmetric positive definite matrix via Cholesky."""
    c = cholesky(np.asarray(mat, dtype=float), lower=True)
    inv = cho_solve((c, True), np.eye(mat.shape[0]))
    return 0.5 * (inv + inv.T)
