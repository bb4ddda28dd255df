"""Built-in latent Gaussian model families.

Every family shares one skeleton: responses are conditionally independent
given a latent vector z ~ N(0, I_d) that enters through a linear predictor

    eta = X beta + A(tau) z,

where A(tau) is the family's n x d loading matrix. Covariance square roots
are realized as lower Cholesky factors; an optional orthogonal rotation of
the factor is supported because the implied model only depends on A A^T.

The skeleton provides the joint log-likelihood of data and latent variables,
analytic derivatives in z and in psi = (beta, z), derivatives in the fixed
parameters (analytic where registered, central finite differences otherwise)
and batched evaluation over many latent vectors. Family classes only declare
the design, the loading matrix and the per-observation log-density.
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit, gammaln

from .errors import DataError, ModelError
from .numerics import LOG_2PI, central_fd_grad_hess
from .params import FISHER_Z, IDENTITY, LOG, ParamLayout, ParamVec


def exp_covariance(phi, alpha, distances):
    """Exponential spatial covariance exp(phi - exp(alpha) * distance)."""
    return np.exp(phi - np.exp(alpha) * distances)


def natural_scale_jacobian(layout, theta):
    """First and second derivatives of the natural coords in the
    unconstrained coords, both diagonal (transforms are coordinate-wise)."""
    nat = theta.natural()
    first = np.ones(nat.size)
    second = np.zeros(nat.size)
    for j, tag in enumerate(layout.tau_transforms):
        k = layout.p + j
        v = nat[k]
        if tag == LOG:
            first[k] = v
            second[k] = v
        elif tag == FISHER_Z:
            first[k] = 1.0 - v**2
            second[k] = -2.0 * v * (1.0 - v**2)
    return first, second


class LatentModel:
    """Skeleton shared by the built-in families."""

    family = "base"

    def __init__(self, dataset, layout, d):
        self.dataset = dataset
        self.layout = layout
        self.d = int(d)
        self._loading_memo = None
        self._rotation = None

    # ------------------------------------------------------------------
    # family hooks
    # ------------------------------------------------------------------

    def _build_loading(self, tau):
        raise NotImplementedError

    def _obs_loglik(self, eta, tau):
        raise NotImplementedError

    def _obs_score(self, eta, tau):
        raise NotImplementedError

    def _obs_curv(self, eta, tau):
        raise NotImplementedError

    def _draw_responses(self, eta, tau, rng):
        raise NotImplementedError

    def _default_tau_natural(self):
        raise NotImplementedError

    # analytic theta-derivative oracle; None means finite differences
    _dtheta_analytic = None
    _dtheta_analytic_batch = None

    @property
    def dtheta_is_analytic(self):
        return self._dtheta_analytic is not None

    # ------------------------------------------------------------------
    # generic machinery
    # ------------------------------------------------------------------

    @property
    def p(self):
        return self.layout.p

    @property
    def q(self):
        return self.layout.q

    @property
    def X(self):
        return self.dataset.X

    @property
    def n(self):
        return self.dataset.n

    def _tau_key(self, tau):
        return tuple(np.asarray(tau, dtype=float).tolist())

    def loading(self, tau):
        """Loading matrix A(tau); memoized on the last tau value."""
        key = self._tau_key(tau)
        memo = self._loading_memo
        if memo is not None and memo[0] == key:
            return memo[1]
        A = self._build_loading(np.asarray(tau, dtype=float))
        if self._rotation is not None:
            A = A @ self._rotation
        self._loading_memo = (key, A)
        return A

    def _check_theta(self, theta):
        if theta.layout.names != self.layout.names:
            raise ModelError(
                f"{self.family}: parameter layout mismatch "
                f"(got {theta.layout.names}, expected {self.layout.names})"
            )

    def _check_z(self, z, batch=False):
        z = np.asarray(z, dtype=float)
        want = 2 if batch else 1
        if z.ndim != want or z.shape[-1] != self.d:
            raise ModelError(
                f"{self.family}: latent vector has shape {z.shape}, expected "
                f"{'(B, %d)' % self.d if batch else '(%d,)' % self.d}"
            )
        if not np.all(np.isfinite(z)):
            raise ModelError(f"{self.family}: latent vector has non-finite entries")
        return z

    @staticmethod
    def latent_prior_logpdf(z):
        """Standard d-variate normal log-density, exact."""
        z = np.asarray(z, dtype=float)
        d = z.shape[-1]
        return -0.5 * np.sum(z * z, axis=-1) - 0.5 * d * LOG_2PI

    def _eta(self, beta, tau, z):
        A = self.loading(tau)
        if z.ndim == 1:
            return self.X @ beta + A @ z
        return (self.X @ beta)[:, None] + A @ z.T

    def _obs_sum_checked(self, eta, tau, allow_neginf=False):
        with np.errstate(over="ignore", invalid="warn"):
            vals = self._obs_loglik(eta, tau)
        bad = np.isnan(vals) if allow_neginf else ~np.isfinite(vals)
        if bad.any():
            i = int(np.argwhere(bad)[0][0])
            raise ModelError(
                f"{self.family}: non-finite log-likelihood at observation {i}"
            )
        return vals.sum(axis=0)

    def obs_loglik(self, theta, z):
        """Per-observation conditional log-density given the latent vector."""
        self._check_theta(theta)
        z = self._check_z(z)
        return self._obs_loglik(self._eta(theta.beta, theta.tau_natural, z), theta.tau_natural)

    def h_loglik(self, theta, z):
        """Joint log-likelihood of data and latent vector."""
        self._check_theta(theta)
        z = self._check_z(z)
        tau = theta.tau_natural
        eta = self._eta(theta.beta, tau, z)
        return float(self._obs_sum_checked(eta, tau) + self.latent_prior_logpdf(z))

    def h_batch(self, theta, Z):
        """h_loglik over the rows of Z, shape (B, d) -> (B,)."""
        self._check_theta(theta)
        Z = self._check_z(Z, batch=True)
        tau = theta.tau_natural
        eta = self._eta(theta.beta, tau, Z)
        return self._obs_sum_checked(eta, tau, allow_neginf=True) + self.latent_prior_logpdf(Z)

    def dz(self, theta, z):
        """Gradient and Hessian of h in z; analytic for all families."""
        self._check_theta(theta)
        z = self._check_z(z)
        tau = theta.tau_natural
        A = self.loading(tau)
        eta = self.X @ theta.beta + A @ z
        u = self._obs_score(eta, tau)
        v = self._obs_curv(eta, tau)
        grad = A.T @ u - z
        hess = (A.T * v) @ A - np.eye(self.d)
        return grad, 0.5 * (hess + hess.T)

    # ---- joint (beta, z) evaluation at fixed tau -----------------------

    def split_psi(self, psi):
        psi = np.asarray(psi, dtype=float)
        return psi[..., : self.p], psi[..., self.p :]

    def h_psi(self, tau, psi):
        beta, z = self.split_psi(psi)
        z = self._check_z(z)
        tau = np.asarray(tau, dtype=float)
        eta = self._eta(beta, tau, z)
        return float(self._obs_sum_checked(eta, tau) + self.latent_prior_logpdf(z))

    def h_psi_batch(self, tau, Psi):
        Betas, Zs = self.split_psi(Psi)
        Zs = self._check_z(Zs, batch=True)
        tau = np.asarray(tau, dtype=float)
        A = self.loading(tau)
        eta = self.X @ Betas.T + A @ Zs.T
        return self._obs_sum_checked(eta, tau, allow_neginf=True) + self.latent_prior_logpdf(Zs)

    def dpsi(self, tau, psi):
        """Gradient and Hessian of h in psi = (beta, z) at fixed tau."""
        beta, z = self.split_psi(psi)
        z = self._check_z(z)
        tau = np.asarray(tau, dtype=float)
        A = self.loading(tau)
        X = self.X
        eta = X @ beta + A @ z
        u = self._obs_score(eta, tau)
        v = self._obs_curv(eta, tau)
        grad = np.concatenate([X.T @ u, A.T @ u - z])
        XtV = X.T * v
        AtV = A.T * v
        hess = np.block(
            [
                [XtV @ X, XtV @ A],
                [AtV @ X, AtV @ A - np.eye(self.d)],
            ]
        )
        return grad, 0.5 * (hess + hess.T)

    # ---- derivatives in the fixed parameters ---------------------------

    def _theta_from_natural(self, x):
        return x[: self.p], x[self.p :]

    def _natural_vec(self, theta, scale):
        if scale == "natural":
            return theta.natural()
        if scale == "unconstrained":
            return theta.unconstrained()
        raise ValueError(f"unknown scale {scale!r}")

    def _h_at(self, x, z_or_Z, scale, batch):
        if scale == "natural":
            beta, tau = self._theta_from_natural(x)
        else:
            pv = ParamVec.from_unconstrained(self.layout, x)
            beta, tau = pv.beta, pv.tau_natural
        try:
            eta = self._eta(beta, tau, z_or_Z)
            vals = self._obs_sum_checked(eta, tau, allow_neginf=z_or_Z.ndim == 2)
        except (ModelError, FloatingPointError, ValueError) as exc:
            raise ModelError(
                f"{self.family}: finite-difference evaluation failed at a "
                f"perturbed parameter value; rescale the parameterization "
                f"({exc})"
            ) from exc
        return vals + self.latent_prior_logpdf(z_or_Z)

    def dtheta(self, theta, z, scale="natural"):
        """Gradient and symmetrized Hessian of h in theta at fixed z.

        scale="natural" differentiates in the reported parameterization,
        scale="unconstrained" in the optimizer parameterization.
        """
        self._check_theta(theta)
        z = self._check_z(z)
        if self.dtheta_is_analytic:
            grad, hess = self._dtheta_analytic(theta, z)
            if scale == "unconstrained":
                grad, hess = self._chain_to_unconstrained(theta, grad, hess)
            return grad, hess
        x0 = self._natural_vec(theta, scale)
        grad, hess = central_fd_grad_hess(lambda x: self._h_at(x, z, scale, False), x0)
        return grad, hess

    def dtheta_batch(self, theta, Z, scale="natural"):
        """dtheta over rows of Z: returns (B, m) grads and (B, m, m) Hessians."""
        self._check_theta(theta)
        Z = self._check_z(Z, batch=True)
        if self._dtheta_analytic_batch is not None:
            G, H = self._dtheta_analytic_batch(theta, Z)
            if scale == "unconstrained":
                G, H = self._chain_to_unconstrained(theta, G, H)
            return G, H
        x0 = self._natural_vec(theta, scale)
        return central_fd_grad_hess(lambda x: self._h_at(x, Z, scale, True), x0)

    def dtau_batch(self, theta, Psi, scale="natural"):
        """Derivatives of h in tau at fixed psi, over rows of Psi."""
        self._check_theta(theta)
        if scale == "natural":
            x0 = theta.tau_natural
        else:
            x0 = np.asarray(theta.tau, dtype=float)
        Betas, Zs = self.split_psi(Psi)
        Zs = self._check_z(Zs, batch=True)

        def f(tx):
            if scale == "natural":
                tau = tx
            else:
                tau = ParamVec(theta.beta, tx, self.layout).tau_natural
            try:
                A = self.loading(tau)
                eta = self.X @ Betas.T + A @ Zs.T
                vals = self._obs_sum_checked(eta, tau, allow_neginf=True)
            except (ModelError, FloatingPointError, ValueError) as exc:
                raise ModelError(
                    f"{self.family}: finite-difference evaluation failed at a "
                    f"perturbed dispersion value; rescale the parameterization "
                    f"({exc})"
                ) from exc
            return vals + self.latent_prior_logpdf(Zs)

        return central_fd_grad_hess(f, x0)

    def _chain_to_unconstrained(self, theta, grad, hess):
        first, second = natural_scale_jacobian(self.layout, theta)
        g_u = grad * first
        if hess.ndim == 2:
            h_u = first[:, None] * hess * first[None, :] + np.diag(grad * second)
        else:
            h_u = first[None, :, None] * hess * first[None, None, :]
            idx = np.arange(first.size)
            h_u[:, idx, idx] += grad * second
        return g_u, h_u

    # ---- simulation ----------------------------------------------------

    def simulate_response(self, theta, rng):
        """New dataset with responses redrawn at theta; z ~ N(0, I_d)."""
        self._check_theta(theta)
        tau = theta.tau_natural
        z = rng.standard_normal(self.d)
        eta = self._eta(theta.beta, tau, z)
        return self._draw_responses(eta, tau, rng)

    def default_start(self):
        """Crude starting point: GLM fit for beta ignoring the latent
        variables, family defaults for the dispersion block."""
        tau = np.asarray(self._default_tau_natural(), dtype=float)
        beta = self._glm_beta_start(tau)
        return ParamVec.from_natural(self.layout, beta, tau)

    def _glm_beta_start(self, tau):
        X = self.X
        beta = np.zeros(self.p)
        for _ in range(25):
            eta = X @ beta
            u = self._obs_score(eta, tau)
            v = self._obs_curv(eta, tau)
            g = X.T @ u
            Hn = (X.T * (-v)) @ X + 1e-8 * np.eye(self.p)
            step = np.linalg.solve(Hn, g)
            beta = beta + step
            if np.max(np.abs(step)) < 1e-10:
                break
        return beta


# ----------------------------------------------------------------------
# response-family mixins
# ----------------------------------------------------------------------


class _BernoulliObs:
    def _y_col(self, eta):
        y = self.dataset.y
        return y[:, None] if eta.ndim == 2 else y

    def _obs_loglik(self, eta, tau):
        return self._y_col(eta) * eta - np.logaddexp(0.0, eta)

    def _obs_score(self, eta, tau):
        return self._y_col(eta) - expit(eta)

    def _obs_curv(self, eta, tau):
        mu = expit(eta)
        return -mu * (1.0 - mu)

    def _draw_responses(self, eta, tau, rng):
        y = (rng.random(self.n) < expit(eta)).astype(float)
        return self.dataset.with_responses(y)


# ----------------------------------------------------------------------
# normal linear mixed model (random intercept)
# ----------------------------------------------------------------------


class NormalLmm(LatentModel):
    """y | z ~ N(X beta + sigma_u * G z, phi I); one random intercept per group."""

    family = "normal_lmm"

    def __init__(self, dataset, n_groups=None):
        if "group" not in dataset.groups:
            raise DataError("normal_lmm requires a 'group' index")
        g = dataset.groups["group"]
        d = int(n_groups) if n_groups is not None else int(g.max()) + 1 if g.size else 0
        if g.size and g.max() >= d:
            raise DataError("group index out of range")
        layout = ParamLayout(
            beta_names=tuple(dataset.x_names),
            tau_names=("sigma_u", "phi"),
            tau_transforms=(LOG, LOG),
        )
        super().__init__(dataset, layout, d)
        self._G = np.zeros((dataset.n, d))
        self._G[np.arange(dataset.n), g] = 1.0

    def _build_loading(self, tau):
        return tau[0] * self._G

    def _default_tau_natural(self):
        return (0.5, 0.5)

    def _obs_loglik(self, eta, tau):
        phi = tau[1]
        y = self.dataset.y[:, None] if eta.ndim == 2 else self.dataset.y
        return -0.5 * ((y - eta) ** 2 / phi + np.log(2.0 * np.pi * phi))

    def _obs_score(self, eta, tau):
        y = self.dataset.y[:, None] if eta.ndim == 2 else self.dataset.y
        return (y - eta) / tau[1]

    def _obs_curv(self, eta, tau):
        return np.full_like(eta, -1.0 / tau[1])

    def _draw_responses(self, eta, tau, rng):
        y = eta + np.sqrt(tau[1]) * rng.standard_normal(self.n)
        return self.dataset.with_responses(y)

    def _glm_beta_start(self, tau):
        X = self.X
        return np.linalg.lstsq(X, self.dataset.y, rcond=None)[0]

    def _dtheta_analytic(self, theta, z):
        G, H = self._dtheta_analytic_batch(theta, z[None, :])
        return G[0], H[0]

    def _dtheta_analytic_batch(self, theta, Z):
        sigma_u, phi = theta.tau_natural
        X, y = self.X, self.dataset.y
        n, p = X.shape
        m = p + 2
        U = Z @ self._G.T                      # (B, n) group effects
        R = (y - X @ theta.beta)[None, :] - sigma_u * U
        B = Z.shape[0]
        grads = np.empty((B, m))
        grads[:, :p] = R @ X / phi
        grads[:, p] = np.sum(U * R, axis=1) / phi
        grads[:, p + 1] = np.sum(R * R, axis=1) / (2.0 * phi**2) - n / (2.0 * phi)
        hess = np.empty((B, m, m))
        hess[:, :p, :p] = -(X.T @ X)[None] / phi
        hbs = -(U @ X) / phi                   # d2h / dbeta dsigma
        hbp = -(R @ X) / phi**2                # d2h / dbeta dphi
        hess[:, :p, p] = hbs
        hess[:, p, :p] = hbs
        hess[:, :p, p + 1] = hbp
        hess[:, p + 1, :p] = hbp
        hess[:, p, p] = -np.sum(U * U, axis=1) / phi
        hsp = -np.sum(U * R, axis=1) / phi**2
        hess[:, p, p + 1] = hsp
        hess[:, p + 1, p] = hsp
        hess[:, p + 1, p + 1] = -np.sum(R * R, axis=1) / phi**3 + n / (2.0 * phi**2)
        return grads, hess


# ----------------------------------------------------------------------
# single-cluster Bernoulli-logit toy
# ----------------------------------------------------------------------


class BernoulliCluster(_BernoulliObs, LatentModel):
    """One cluster of Bernoulli outcomes sharing a scalar latent effect:
    logit P(y_j = 1 | z) = beta0 + sigma * z."""

    family = "bernoulli_cluster_toy"

    def __init__(self, dataset):
        layout = ParamLayout(
            beta_names=("beta0",),
            tau_names=("sigma",),
            tau_transforms=(LOG,),
        )
        super().__init__(dataset, layout, 1)
        if dataset.X.shape[1] != 1 or not np.allclose(dataset.X, 1.0):
            raise DataError("bernoulli_cluster_toy expects an intercept-only design")

    def _build_loading(self, tau):
        return np.full((self.n, 1), tau[0])

    def _default_tau_natural(self):
        return (0.5,)

    def _dtheta_analytic(self, theta, z):
        G, H = self._dtheta_analytic_batch(theta, z[None, :])
        return G[0], H[0]

    def _dtheta_analytic_batch(self, theta, Z):
        sigma = theta.tau_natural[0]
        zcol = Z[:, 0]
        eta = theta.beta[0] + sigma * zcol[None, :] * np.ones((self.n, 1))
        mu = expit(eta)
        U = self.dataset.y[:, None] - mu
        S = U.sum(axis=0)
        W = (mu * (1.0 - mu)).sum(axis=0)
        B = Z.shape[0]
        grads = np.column_stack([S, zcol * S])
        hess = np.empty((B, 2, 2))
        hess[:, 0, 0] = -W
        hess[:, 0, 1] = hess[:, 1, 0] = -zcol * W
        hess[:, 1, 1] = -(zcol**2) * W
        return grads, hess


# ----------------------------------------------------------------------
# salamander mating families (crossed binary data)
# ----------------------------------------------------------------------

SUMMER_X_COLS = ("intercept", "trtf", "trtm", "trtf_trtm")
POOLED_X_COLS = SUMMER_X_COLS + ("season",)


def _crossed_indicators(idx, n_levels):
    M = np.zeros((idx.shape[0], n_levels))
    M[np.arange(idx.shape[0]), idx] = 1.0
    return M


class SummerGlmm(_BernoulliObs, LatentModel):
    """Crossed binary model with independent female and male effects:
    logit P(y_ij = 1) = x_ij' beta + sigma_f z_i^f + sigma_m z_j^m."""

    family = "summer_glmm"

    def __init__(self, dataset):
        for k in ("female", "male"):
            if k not in dataset.groups:
                raise DataError(f"summer_glmm requires a {k!r} index")
        if "experiment" in dataset.groups and all(
            c in dataset.x_names for c in SUMMER_X_COLS
        ):
            dataset = dataset.subset(
                dataset.groups["experiment"] == 1, x_cols=list(SUMMER_X_COLS)
            )
        f, m = dataset.groups["female"], dataset.groups["male"]
        self.n_f = int(f.max()) + 1
        self.n_m = int(m.max()) + 1
        layout = ParamLayout(
            beta_names=tuple(dataset.x_names),
            tau_names=("sigma_f", "sigma_m"),
            tau_transforms=(LOG, LOG),
        )
        super().__init__(dataset, layout, self.n_f + self.n_m)
        self._F = _crossed_indicators(f, self.n_f)
        self._M = _crossed_indicators(m, self.n_m)

    def _build_loading(self, tau):
        return np.hstack([tau[0] * self._F, tau[1] * self._M])

    def _default_tau_natural(self):
        return (0.5, 0.5)


def correlated_pair_chol(s1, s2, rho):
    """Lower Cholesky factor of the 3x3 covariance with a correlated
    (season-1, season-2) pair and an independent third season:

        [[s1^2,        rho s1 s2,  0    ]
         [rho s1 s2,   s2^2,       0    ]
         [0,           0,          s2^2 ]]
    """
    c = np.sqrt(max(1.0 - rho**2, 0.0))
    return np.array(
        [
            [s1, 0.0, 0.0],
            [rho * s2, c * s2, 0.0],
            [0.0, 0.0, s2],
        ]
    )


class PooledGlmm(_BernoulliObs, LatentModel):
    """Crossed binary model for all three experiments with correlated
    female and male effects across the repeated seasons.

    Each animal carries a 3-vector of iid N(0,1) latent coordinates; the
    effect of animal a in experiment k is row k of the lower Cholesky factor
    of its 3x3 covariance applied to that vector. Experiment 3 effects are
    independent of experiments 1-2 (zero covariance), so reusing animal ids
    across experiments induces no spurious correlation.
    """

    family = "pooled_glmm"

    tau_spec = (
        ("sigma_f1", LOG),
        ("sigma_f2", LOG),
        ("rho_f", FISHER_Z),
        ("sigma_m1", LOG),
        ("sigma_m2", LOG),
        ("rho_m", FISHER_Z),
    )
    male_block = 3

    def __init__(self, dataset, factor_rotation=None):
        for k in ("female", "male", "experiment"):
            if k not in dataset.groups:
                raise DataError(f"{self.family} requires a {k!r} index")
        exp = dataset.groups["experiment"]
        if not np.all(np.isin(exp, (1, 2, 3))):
            raise DataError("experiment codes must be 1, 2 or 3")
        f, m = dataset.groups["female"], dataset.groups["male"]
        self.n_f = int(f.max()) + 1
        self.n_m = int(m.max()) + 1
        names, tags = zip(*self.tau_spec)
        layout = ParamLayout(
            beta_names=tuple(dataset.x_names),
            tau_names=names,
            tau_transforms=tags,
        )
        d = 3 * self.n_f + self.male_block * self.n_m
        super().__init__(dataset, layout, d)
        self._f, self._m, self._k = f, m, exp - 1
        self._rot_f = self._rot_m = None
        if factor_rotation is not None:
            self._rot_f, self._rot_m = factor_rotation

    def _female_factor(self, tau):
        L = correlated_pair_chol(tau[0], tau[1], tau[2])
        return L if self._rot_f is None else L @ self._rot_f

    def _male_factor(self, tau):
        L = correlated_pair_chol(tau[3], tau[4], tau[5])
        return L if self._rot_m is None else L @ self._rot_m

    def _build_loading(self, tau):
        Lf = self._female_factor(tau)
        Lm = self._male_factor(tau)
        n = self.n
        A = np.zeros((n, self.d))
        rows = np.arange(n)[:, None]
        fcols = 3 * self._f[:, None] + np.arange(3)[None, :]
        A[rows, fcols] = Lf[self._k]
        mb = self.male_block
        mcols = 3 * self.n_f + mb * self._m[:, None] + np.arange(mb)[None, :]
        A[rows, mcols] = Lm[self._k]
        return A

    def _default_tau_natural(self):
        return (0.5, 0.5, 0.0, 0.5, 0.5, 0.0)


class PooledSharedGlmm(PooledGlmm):
    """Pooled-data submodel with a shared male effect: the season-2 male
    effect is gamma_m times the season-1 effect (perfect correlation), and
    experiment 3 keeps an independent effect with the season-2 scale."""

    family = "pooled_shared_glmm"

    tau_spec = (
        ("sigma_f1", LOG),
        ("sigma_f2", LOG),
        ("rho_f", FISHER_Z),
        ("sigma_m", LOG),
        ("gamma_m", IDENTITY),
    )
    male_block = 2

    def _male_factor(self, tau):
        sm, gm = tau[3], tau[4]
        L = np.array(
            [
                [sm, 0.0],
                [sm * gm, 0.0],
                [0.0, sm * gm],
            ]
        )
        return L if self._rot_m is None else L @ self._rot_m

    def _default_tau_natural(self):
        return (0.5, 0.5, 0.0, 0.5, 1.0)


# ----------------------------------------------------------------------
# spatial Poisson families
# ----------------------------------------------------------------------


class SpatialPoisson(LatentModel):
    """Counts over exposure times on a spatial grid:
    y_i | z ~ Poisson(t_i lambda_i), log lambda = beta0 + A(phi, alpha) z,
    A the lower Cholesky factor of the exponential covariance."""

    family = "spatial_poisson"

    def __init__(self, dataset, factor_rotation=None):
        if dataset.coords is None or dataset.distances is None:
            raise DataError(f"{self.family} requires coordinates")
        if dataset.t is None:
            raise DataError(f"{self.family} requires exposure times")
        layout = ParamLayout(
            beta_names=tuple(dataset.x_names),
            tau_names=("phi", "alpha"),
            tau_transforms=(IDENTITY, IDENTITY),
        )
        super().__init__(dataset, layout, dataset.n)
        self._rotation = factor_rotation
        self._lgamma_y = gammaln(dataset.y + 1.0)
        self._log_t = np.log(dataset.t)

    def _build_loading(self, tau):
        phi, alpha = tau
        cov = exp_covariance(phi, alpha, self.dataset.distances)
        scale = np.exp(phi)
        for jit in (0.0, 1e-10, 1e-8, 1e-6):
            try:
                return np.linalg.cholesky(cov + jit * scale * np.eye(self.d))
            except np.linalg.LinAlgError:
                continue
        raise ModelError(
            f"{self.family}: covariance not positive definite at "
            f"phi={phi:.4g}, alpha={alpha:.4g} even after jitter"
        )

    def _default_tau_natural(self):
        return (np.log(0.5), 0.0)

    def _y_col(self, eta):
        y = self.dataset.y
        return y[:, None] if eta.ndim == 2 else y

    def _t_col(self, eta):
        t = self.dataset.t
        return t[:, None] if eta.ndim == 2 else t

    def _obs_loglik(self, eta, tau):
        y, t = self._y_col(eta), self._t_col(eta)
        lg = self._lgamma_y[:, None] if eta.ndim == 2 else self._lgamma_y
        lt = self._log_t[:, None] if eta.ndim == 2 else self._log_t
        return y * (lt + eta) - t * np.exp(eta) - lg

    def _obs_score(self, eta, tau):
        return self._y_col(eta) - self._t_col(eta) * np.exp(eta)

    def _obs_curv(self, eta, tau):
        return -self._t_col(eta) * np.exp(eta)

    def _draw_responses(self, eta, tau, rng):
        y = rng.poisson(self.dataset.t * np.exp(eta)).astype(float)
        return self.dataset.with_responses(y)


class SpatialOverdispersedPoisson(SpatialPoisson):
    """Overdispersed variant fitted on rates c_i = y_i / t_i with the
    continuous Poisson kernel c log(lambda) - lambda - log Gamma(c + 1),
    which handles non-integer rates."""

    family = "spatial_odp"

    def __init__(self, dataset, factor_rotation=None):
        super().__init__(dataset, factor_rotation=factor_rotation)
        self._c = dataset.y / dataset.t
        self._lgamma_c = gammaln(self._c + 1.0)

    def _c_col(self, eta):
        return self._c[:, None] if eta.ndim == 2 else self._c

    def _obs_loglik(self, eta, tau):
        c = self._c_col(eta)
        lg = self._lgamma_c[:, None] if eta.ndim == 2 else self._lgamma_c
        return c * eta - np.exp(eta) - lg

    def _obs_score(self, eta, tau):
        return self._c_col(eta) - np.exp(eta)

    def _obs_curv(self, eta, tau):
        return -np.exp(eta)

    def _draw_responses(self, eta, tau, rng):
        c = rng.poisson(np.exp(eta)).astype(float)
        return self.dataset.with_responses(c * self.dataset.t)


# ----------------------------------------------------------------------
# registry
# ----------------------------------------------------------------------

FAMILIES = {
    "normal_lmm": NormalLmm,
    "bernoulli_cluster_toy": BernoulliCluster,
    "summer_glmm": SummerGlmm,
    "pooled_glmm": PooledGlmm,
    "pooled_shared_glmm": PooledSharedGlmm,
    "spatial_poisson": SpatialPoisson,
    "spatial_odp": SpatialOverdispersedPoisson,
}


def build_model(family, dataset, **options):
    """Construct a registered model family on a dataset."""
    try:
        cls = FAMILIES[family]
    except KeyError:
        known = ", ".join(sorted(FAMILIES))
        raise ModelError(f"unknown model family {family!r}; known: {known}") from None
    return cls(dataset, **options)
