"""Monte Carlo correction of the Laplace approximation.

The marginal likelihood is estimated by averaging the ratio of the joint
density to the Gaussian predictive density over draws from that predictive.
With the draws held fixed through common random numbers the estimate is a
smooth deterministic function of the parameters. The same construction
applied at the joint (beta, z) mode yields the restricted likelihood for
dispersion parameters, and weighted score/Hessian sums over the same draws
yield consistent observed-information estimators.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .errors import EstimateError
from .laplace import gaussian_predictive_logpdf
from .modes import joint_mode, latent_mode
from .params import ParamVec

ESS_WARN_FRACTION = 0.05


@dataclass(frozen=True)
class CrnDraws:
    """Common random numbers: a fixed block of standard-normal draws.

    The first B rows of a larger block equal the block drawn with that B
    directly, so one CrnDraws can serve nested values of B.
    """

    u: np.ndarray
    seed: int
    stream: int = 0

    @classmethod
    def from_seed(cls, seed, B, dim, stream=0):
        ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(stream),))
        u = np.random.default_rng(ss).standard_normal((int(B), int(dim)))
        u.setflags(write=False)
        return cls(u=u, seed=int(seed), stream=int(stream))

    @property
    def B(self):
        return self.u.shape[0]

    @property
    def dim(self):
        return self.u.shape[1]


@dataclass(frozen=True)
class ElaEstimate:
    """Monte Carlo log-likelihood estimate with weight diagnostics."""

    loglik: float
    weights: np.ndarray
    ess: float
    mc_se: float
    B: int
    seed: int

    @property
    def ess_fraction(self):
        return self.ess / self.B

    @property
    def weights_degenerate(self):
        return self.ess < ESS_WARN_FRACTION * self.B


@dataclass(frozen=True)
class InformationResult:
    """Weighted-draw observed information and score."""

    info: np.ndarray
    score: np.ndarray
    weights: np.ndarray
    ess: float


def sample_predictive(mode, crn, B=None):
    """Draws from N(mode, Omega^{-1}): Z_b = mode + L^{-T} u_b.

    With fixed common random numbers the draws are a smooth deterministic
    function of the parameters through (mode, L).
    """
    u = crn.u if B is None else crn.u[: int(B)]
    if u.shape[1] != mode.chol.shape[0]:
        raise ValueError(
            f"draw dimension {u.shape[1]} does not match mode dimension "
            f"{mode.chol.shape[0]}"
        )
    shift = solve_triangular(mode.chol, u.T, lower=True, trans="T")
    return mode.mode[None, :] + shift.T


def _check_crn(crn, B, dim, what):
    B = int(B)
    if B < 1:
        raise ValueError("B must be at least 1")
    if crn.B < B:
        raise ValueError(f"CrnDraws holds {crn.B} rows but B={B} requested")
    if crn.dim != dim:
        raise ValueError(f"{what}: CrnDraws dimension {crn.dim}, expected {dim}")
    return B


def _ratios(model_values, predictive_values, h_at_mode):
    """Log importance ratios with the boundedness check r <= h(mode) - logpdf."""
    r = model_values - predictive_values
    slack = 1e-8 * (1.0 + abs(h_at_mode))
    if np.any(model_values > h_at_mode + slack):
        raise EstimateError(
            "a sampled joint density exceeds its value at the mode; "
            "the inner optimization likely did not converge"
        )
    return r


def _estimate_from_ratios(r, B, seed):
    if np.all(np.isneginf(r)):
        raise EstimateError(
            "all importance ratios are -inf; model and data are inconsistent"
        )
    m = float(np.max(r))
    a = np.exp(r - m)
    mean_a = float(np.mean(a))
    loglik = m + float(np.log(mean_a))
    weights = a / a.sum()
    ess = 1.0 / float(np.sum(weights**2))
    if B > 1:
        mc_se = float(np.std(a, ddof=1) / (np.sqrt(B) * mean_a))
    else:
        mc_se = float("nan")
    if not (weights >= 0.0).all() or abs(weights.sum() - 1.0) > 1e-12:
        raise EstimateError("importance weights failed normalization")
    if not (1.0 - 1e-9 <= ess <= B + 1e-9):
        raise EstimateError("effective sample size outside [1, B]")
    return ElaEstimate(
        loglik=loglik,
        weights=weights,
        ess=ess,
        mc_se=mc_se,
        B=B,
        seed=seed,
    )


def ela_marginal_impl(model, theta, B, crn, z0=None, tol=1e-9, mode_max_iter=200):
    B = _check_crn(crn, B, model.d, "marginal draws")
    mode = latent_mode(model, theta, z0=z0, tol=tol, max_iter=mode_max_iter)
    Z = sample_predictive(mode, crn, B)
    hv = model.h_batch(theta, Z)
    lp = gaussian_predictive_logpdf(Z, mode)
    r = _ratios(hv, lp, mode.h_at_mode)
    return _estimate_from_ratios(r, B, crn.seed), mode


def ela_marginal(model, theta, B, crn):
    """Monte Carlo estimate of the marginal log-likelihood at theta."""
    est, _ = ela_marginal_impl(model, theta, B, crn)
    return est


def elbo_estimate(model, theta, B, crn):
    """Mean of the log importance ratios: a stochastic evidence lower bound."""
    B = _check_crn(crn, B, model.d, "marginal draws")
    mode = latent_mode(model, theta)
    Z = sample_predictive(mode, crn, B)
    r = _ratios(model.h_batch(theta, Z), gaussian_predictive_logpdf(Z, mode), mode.h_at_mode)
    return float(np.mean(r))


def ela_restricted_impl(model, tau, B, crn, psi0=None, tol=1e-9, mode_max_iter=200):
    B = _check_crn(crn, B, model.p + model.d, "restricted draws")
    mode = joint_mode(model, tau, psi0=psi0, tol=tol, max_iter=mode_max_iter)
    Psi = sample_predictive(mode, crn, B)
    hv = model.h_psi_batch(tau, Psi)
    lp = gaussian_predictive_logpdf(Psi, mode)
    r = _ratios(hv, lp, mode.h_at_mode)
    return _estimate_from_ratios(r, B, crn.seed), mode


def ela_restricted(model, tau, B, crn):
    """Monte Carlo estimate of the restricted log-likelihood at tau.

    tau is on the natural scale; draws live in psi = (beta, z) space.
    """
    est, _ = ela_restricted_impl(model, tau, B, crn)
    return est


def _weighted_information(weights, grads, hessians):
    keep = weights > 0.0
    if not keep.all():
        weights, grads, hessians = weights[keep], grads[keep], hessians[keep]
    g = weights @ grads
    gg = (grads * weights[:, None]).T @ grads
    hbar = np.einsum("b,bij->ij", weights, hessians)
    info = np.outer(g, g) - gg - hbar
    return 0.5 * (info + info.T), g


def ela_information(model, theta, B, crn, scale="natural"):
    """Observed-information estimate for theta from weighted predictive draws.

    Returns an InformationResult; inverting `.info` estimates the sampling
    covariance of the maximum likelihood estimator on the chosen scale.
    """
    B = _check_crn(crn, B, model.d, "marginal draws")
    if B < 2:
        raise ValueError("information estimation needs B >= 2")
    est, mode = ela_marginal_impl(model, theta, B, crn)
    Z = sample_predictive(mode, crn, B)
    grads, hessians = model.dtheta_batch(theta, Z, scale=scale)
    info, score = _weighted_information(est.weights, grads, hessians)
    return InformationResult(info=info, score=score, weights=est.weights, ess=est.ess)


def ela_reml_information(model, tau, B, crn, scale="natural"):
    """Observed-information estimate for tau from weighted joint-mode draws."""
    B = _check_crn(crn, B, model.p + model.d, "restricted draws")
    if B < 2:
        raise ValueError("information estimation needs B >= 2")
    est, mode = ela_restricted_impl(model, tau, B, crn)
    Psi = sample_predictive(mode, crn, B)
    theta = ParamVec.from_natural(model.layout, np.zeros(model.p), tau)
    grads, hessians = model.dtau_batch(theta, Psi, scale=scale)
    info, score = _weighted_information(est.weights, grads, hessians)
    return InformationResult(info=info, score=score, weights=est.weights, ess=est.ess)
