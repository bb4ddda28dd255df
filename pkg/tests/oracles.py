"""Independent reference implementations used as test oracles.

Everything here is written from first principles (dense linear algebra,
quadrature, finite differences) and deliberately avoids the package's own
evaluation paths.
"""

from __future__ import annotations

import numpy as np
from numpy.polynomial.hermite import hermgauss
from scipy.integrate import quad
from scipy.optimize import minimize_scalar
from scipy.special import expit, logsumexp

EPS = np.finfo(float).eps


def fd_gradient(f, x, rel=EPS ** (1.0 / 3.0)):
    x = np.asarray(x, dtype=float)
    g = np.zeros(x.size)
    for k in range(x.size):
        h = rel * max(1.0, abs(x[k]))
        xp, xm = x.copy(), x.copy()
        xp[k] += h
        xm[k] -= h
        g[k] = (f(xp) - f(xm)) / (2 * h)
    return g


def fd_hessian(f, x, rel=EPS**0.25):
    x = np.asarray(x, dtype=float)
    m = x.size
    h = rel * np.maximum(1.0, np.abs(x))
    H = np.zeros((m, m))
    f0 = f(x)
    for k in range(m):
        xp, xm = x.copy(), x.copy()
        xp[k] += h[k]
        xm[k] -= h[k]
        H[k, k] = (f(xp) - 2 * f0 + f(xm)) / h[k] ** 2
    for k in range(m):
        for l in range(k + 1, m):
            xpp, xpm, xmp, xmm = x.copy(), x.copy(), x.copy(), x.copy()
            xpp[[k, l]] += [h[k], h[l]]
            xpm[[k, l]] += [h[k], -h[l]]
            xmp[[k, l]] += [-h[k], h[l]]
            xmm[[k, l]] += [-h[k], -h[l]]
            H[k, l] = H[l, k] = (f(xpp) - f(xpm) - f(xmp) + f(xmm)) / (4 * h[k] * h[l])
    return H


# ----------------------------------------------------------------------
# normal linear mixed model, y = X beta + sigma_u * G z + e
# ----------------------------------------------------------------------


def lmm_marginal_loglik(y, X, G, beta, sigma_u, phi):
    n = y.size
    V = phi * np.eye(n) + sigma_u**2 * (G @ G.T)
    r = y - X @ np.atleast_1d(beta)
    sign, logdet = np.linalg.slogdet(V)
    return -0.5 * (n * np.log(2 * np.pi) + logdet + r @ np.linalg.solve(V, r))


def lmm_restricted_loglik(y, X, G, sigma_u, phi):
    """Fixed-effects-integrated log-likelihood (flat prior over beta)."""
    n, p = X.shape
    V = phi * np.eye(n) + sigma_u**2 * (G @ G.T)
    Vi = np.linalg.inv(V)
    XtViX = X.T @ Vi @ X
    beta_t = np.linalg.solve(XtViX, X.T @ Vi @ y)
    lm = lmm_marginal_loglik(y, X, G, beta_t, sigma_u, phi)
    return lm + 0.5 * p * np.log(2 * np.pi) - 0.5 * np.linalg.slogdet(XtViX)[1]


def lmm_conditional_mode(y, X, G, beta, sigma_u, phi):
    """BLUP-style latent mode from the normal equations."""
    d = G.shape[1]
    lhs = sigma_u**2 * (G.T @ G) / phi + np.eye(d)
    rhs = sigma_u * G.T @ (y - X @ np.atleast_1d(beta)) / phi
    return np.linalg.solve(lhs, rhs)


def lmm_joint_mode(y, X, G, sigma_u, phi):
    """Henderson's mixed-model equations for (beta, z) jointly."""
    p, d = X.shape[1], G.shape[1]
    Zs = sigma_u * G
    lhs = np.block(
        [
            [X.T @ X / phi, X.T @ Zs / phi],
            [Zs.T @ X / phi, Zs.T @ Zs / phi + np.eye(d)],
        ]
    )
    rhs = np.concatenate([X.T @ y / phi, Zs.T @ y / phi])
    sol = np.linalg.solve(lhs, rhs)
    return sol[:p], sol[p:]


def balanced_one_way_reml(y, group, n_groups, per_group):
    """Closed-form REML variance components for the balanced one-way layout."""
    means = np.array([y[group == i].mean() for i in range(n_groups)])
    grand = y.mean()
    ssa = per_group * np.sum((means - grand) ** 2)
    sse = np.sum((y - means[group]) ** 2)
    msa = ssa / (n_groups - 1)
    mse = sse / (n_groups * (per_group - 1))
    sigma_u = np.sqrt(max((msa - mse) / per_group, 0.0))
    return sigma_u, mse


def lmm_quadrature_restricted(y, X, G, tau, lo=-60.0, hi=60.0):
    """r(tau) by 1-D quadrature over a scalar fixed effect."""
    assert X.shape[1] == 1
    sigma_u, phi = tau
    shift = lmm_marginal_loglik(y, X, G, y.mean(), sigma_u, phi)

    def integrand(b):
        return np.exp(lmm_marginal_loglik(y, X, G, b, sigma_u, phi) - shift)

    val, _ = quad(integrand, lo, hi, limit=300)
    return shift + np.log(val)


# ----------------------------------------------------------------------
# single-cluster Bernoulli-logit toy
# ----------------------------------------------------------------------


def toy_h(y, beta, sigma, z):
    eta = beta + sigma * z
    return float(np.sum(y * eta - np.logaddexp(0.0, eta)) - 0.5 * z * z - 0.5 * np.log(2 * np.pi))


def toy_gh_marginal(y, beta, sigma, nodes=200):
    """Adaptive Gauss-Hermite marginal log-likelihood, d = 1."""
    gx, gw = hermgauss(nodes)
    zm = minimize_scalar(lambda z: -toy_h(y, beta, sigma, z)).x
    mu = expit(beta + sigma * zm)
    omega = sigma**2 * np.sum(mu * (1.0 - mu)) + 1.0
    s = 1.0 / np.sqrt(omega)
    zs = zm + np.sqrt(2.0) * s * gx
    vals = np.array([toy_h(y, beta, sigma, z) for z in zs])
    return float(logsumexp(np.log(gw) + gx**2 + vals) + np.log(np.sqrt(2.0) * s))


def toy_gh_mle(y, nodes=200):
    from scipy.optimize import minimize

    res = minimize(
        lambda x: -toy_gh_marginal(y, x[0], np.exp(x[1]), nodes),
        np.array([0.0, -0.5]),
        method="Nelder-Mead",
        options={"xatol": 1e-10, "fatol": 1e-12, "maxiter": 4000},
    )
    return np.array([res.x[0], np.exp(res.x[1])])
