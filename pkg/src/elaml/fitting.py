"""Outer optimization: ML and REML fits, likelihood ratio tests, delta method.

Point estimation maximizes the Monte Carlo corrected (or plain Laplace)
objective on the unconstrained scale with quasi-Newton iterations and
finite-difference gradients; common random numbers keep the objective smooth
and deterministic. Standard errors come from the weighted-draw information
matrices evaluated with an independent, larger draw set; covariances are
formed on the unconstrained scale and mapped to the natural scale exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import minimize

from .ela import (
    CrnDraws,
    ela_information,
    ela_marginal_impl,
    ela_reml_information,
    ela_restricted_impl,
)
from .errors import ElamlError, FitError
from .laplace import la_marginal_with_mode, la_restricted_with_mode
from .models import natural_scale_jacobian
from .numerics import central_fd_grad, central_fd_grad_hess, spd_inverse
from .params import FISHER_Z, ParamVec, to_unconstrained

BOUNDARY_UNCONSTRAINED = 20.0
CORRELATION_BOUNDARY = 0.98
GRAD_CHECK_SCALE = 1e-4

_STREAM_POINT_Z = 0
_STREAM_POINT_PSI = 1
_STREAM_SE_Z = 2
_STREAM_SE_PSI = 3


@dataclass
class FitOptions:
    tol: float = 1e-6
    max_iter: int = 500
    seed: int = 0
    B_se: int | None = None
    B_tau: int | None = None
    fixed: dict = field(default_factory=dict)
    max_cycles: int = 50
    force_se: bool = False
    se_escalations: int = 2
    compute_se: bool = True
    restarts: int = 0
    mode_tol: float = 1e-9
    mode_max_iter: int = 60

    def resolved_B_se(self, B):
        return int(self.B_se) if self.B_se is not None else max(1000, 2 * int(B))

    def resolved_B_tau(self, B):
        return int(self.B_tau) if self.B_tau is not None else int(B)


@dataclass
class FitResult:
    family: str
    method: str
    estimand: str
    names: tuple
    values: np.ndarray
    estimates: ParamVec | None
    cov: np.ndarray | None
    se: np.ndarray | None
    converged: bool
    loglik_at_opt: float
    ml_loglik_at_opt: float
    B_point: int
    B_tau: int | None
    B_se: int
    seeds: dict
    fixed: dict
    warnings: list
    trace: dict
    mc_se: float
    ess: float

    def value(self, name):
        return float(self.values[self.names.index(name)])

    def se_of(self, name):
        if self.se is None:
            return float("nan")
        return float(self.se[self.names.index(name)])


def _guarded(neg):
    """Objective evaluation failures (singular curvature at extreme trial
    parameters, inconsistent draws) count as infinitely bad points so the
    outer optimizer retreats instead of aborting the fit."""

    def wrapped(x):
        try:
            return neg(x)
        except (ElamlError, np.linalg.LinAlgError):
            return np.inf

    return wrapped


class _FreeMap:
    """Embedding between the free-coordinate vector seen by the optimizer
    and the full unconstrained parameter vector."""

    def __init__(self, layout, fixed):
        self.layout = layout
        m = layout.p + layout.q
        self.full_size = m
        self.fixed = dict(fixed)
        template = np.zeros(m)
        fixed_idx = []
        for name, value in self.fixed.items():
            k = layout.index(name)
            if k < layout.p:
                template[k] = float(value)
            else:
                tag = layout.tau_transforms[k - layout.p]
                v = float(value)
                if tag == FISHER_Z:
                    # +/-1 means the boundary model; clamp to the nearest
                    # representable point (likelihood impact is O(1e-9))
                    v = float(np.clip(v, -1.0 + 1e-9, 1.0 - 1e-9))
                template[k] = to_unconstrained(v, tag)
            fixed_idx.append(k)
        self.fixed_idx = np.array(sorted(fixed_idx), dtype=int)
        self.free_idx = np.array(
            [k for k in range(m) if k not in set(fixed_idx)], dtype=int
        )
        self.template = template

    def full(self, xfree):
        x = self.template.copy()
        x[self.free_idx] = xfree
        return x

    def pack(self, x_full):
        return np.asarray(x_full, dtype=float)[self.free_idx]


def _grad_check(neg, x, fval):
    grad = central_fd_grad(neg, x) if x.size else np.zeros(0)
    gnorm = float(np.max(np.abs(grad))) if grad.size else 0.0
    return gnorm, gnorm <= GRAD_CHECK_SCALE * (1.0 + abs(fval))


def _maximize(neg, x0, opts, label):
    """Quasi-Newton with FD gradients; Nelder-Mead polish only when the
    quasi-Newton result fails the stationarity check (noisy FD gradients).

    Runs under silenced floating-point warnings: guarded objectives return
    inf at invalid points and the surrounding arithmetic on inf is expected.
    """
    neg = _guarded(neg)
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        return _maximize_inner(neg, x0, opts, label)


def _maximize_inner(neg, x0, opts, label):
    x0 = np.asarray(x0, dtype=float)
    g0 = central_fd_grad(neg, x0) if x0.size else np.zeros(0)
    finite = g0[np.isfinite(g0)] if g0.size else g0
    gmax = float(np.max(np.abs(finite))) if finite.size else 1.0
    # unit-ish first step regardless of the objective's scale
    h0 = np.eye(x0.size) / max(1.0, gmax)
    res = minimize(
        neg,
        x0,
        method="BFGS",
        jac="3-point",
        options={"gtol": opts.tol, "maxiter": opts.max_iter, "hess_inv0": h0},
    )
    nfev = int(res.nfev) + 2 * x0.size
    gnorm, converged = _grad_check(neg, res.x, res.fun)
    if not converged:
        polish = minimize(
            neg,
            res.x,
            method="Nelder-Mead",
            options={
                "xatol": 0.1 * opts.tol,
                "fatol": 1e-12,
                "maxiter": 60 * max(1, x0.size),
            },
        )
        nfev += int(polish.nfev)
        if polish.fun <= res.fun:
            res = polish
        gnorm, converged = _grad_check(neg, res.x, res.fun)
    trace = {
        "label": label,
        "nfev": nfev,
        "message": str(res.message),
        "grad_sup_norm": gnorm,
    }
    return np.asarray(res.x, dtype=float), float(res.fun), converged, trace


def _restart_points(x0, opts):
    yield x0
    if opts.restarts > 0:
        rng = np.random.default_rng(
            np.random.SeedSequence(entropy=int(opts.seed), spawn_key=(99,))
        )
        for _ in range(int(opts.restarts)):
            yield x0 + 0.5 * rng.standard_normal(x0.size)


def _maximize_with_restarts(neg, x0, opts, label):
    best = None
    for start in _restart_points(np.asarray(x0, dtype=float), opts):
        out = _maximize(neg, start, opts, label)
        if best is None or out[1] < best[1]:
            best = out
    return best


def _boundary_warnings(model, theta):
    notes = []
    layout = theta.layout
    x = theta.unconstrained()
    nat = theta.natural()
    for k, name in enumerate(layout.names):
        if abs(x[k]) > BOUNDARY_UNCONSTRAINED:
            notes.append(
                f"coordinate {name} drifted to the unconstrained boundary (|u| > 20)"
            )
    for j, tag in enumerate(layout.tau_transforms):
        if tag == FISHER_Z and abs(nat[layout.p + j]) > CORRELATION_BOUNDARY:
            msg = f"correlation {layout.tau_names[j]} is near the +/-1 boundary"
            if model.family == "pooled_glmm":
                msg += "; consider the pooled_shared_glmm shared-effect submodel"
            notes.append(msg)
    return notes


def _natural_cov_from_unconstrained(cov_u, theta, free_idx):
    first, _ = natural_scale_jacobian(theta.layout, theta)
    scale = first[free_idx]
    return scale[:, None] * cov_u * scale[None, :]


def _embed_cov(cov_free, free_idx, m):
    cov = np.zeros((m, m))
    cov[np.ix_(free_idx, free_idx)] = cov_free
    return cov


def _invert_information(info, warnings, force, what):
    try:
        return spd_inverse(info)
    except np.linalg.LinAlgError:
        warnings.append(
            f"{what} information matrix is not positive definite at the optimum"
        )
        if force:
            warnings.append(f"{what} standard errors computed from a pseudo-inverse")
            inv = np.linalg.pinv(info)
            return 0.5 * (inv + inv.T)
        return None


def _cov_with_escalation(compute_info_free, B_se, opts, notes, what):
    """Invert the free-block information, escalating the draw count when the
    estimate comes out indefinite (Monte Carlo noise at small B)."""
    B = int(B_se)
    for attempt in range(max(0, int(opts.se_escalations)) + 1):
        info_free = compute_info_free(B)
        try:
            return spd_inverse(info_free), B
        except np.linalg.LinAlgError:
            if attempt < opts.se_escalations:
                B *= 4
    notes.append(
        f"{what} information matrix is not positive definite at the optimum "
        f"(after escalating draws to B={B})"
    )
    if opts.force_se:
        notes.append(f"{what} standard errors computed from a pseudo-inverse")
        inv = np.linalg.pinv(compute_info_free(B))
        return 0.5 * (inv + inv.T), B
    return None, B


def _la_information_unconstrained(objective_u, x_hat):
    _, hess = central_fd_grad_hess(objective_u, x_hat, rel=np.finfo(float).eps ** 0.25)
    return -hess


def fit_ml(model, theta0=None, B=50, opts=None, method="ela"):
    """Maximize the marginal log-likelihood objective over all parameters.

    method="ela" maximizes the Monte Carlo corrected objective under fixed
    common random numbers; method="la" maximizes the plain Laplace objective.
    """
    opts = opts or FitOptions()
    theta0 = theta0 if theta0 is not None else model.default_start()
    layout = model.layout
    fm = _FreeMap(layout, opts.fixed)
    B = int(B)
    B_se = opts.resolved_B_se(B)
    crn = CrnDraws.from_seed(opts.seed, B, model.d, stream=_STREAM_POINT_Z)
    state = {"z0": None}

    def neg(xfree):
        theta = ParamVec.from_unconstrained(layout, fm.full(xfree))
        if method == "ela":
            est, mode = ela_marginal_impl(
                model, theta, B, crn, z0=state["z0"], tol=opts.mode_tol,
                mode_max_iter=opts.mode_max_iter,
            )
            state["z0"] = mode.mode
            return -est.loglik
        val, mode = la_marginal_with_mode(
            model, theta, z0=state["z0"], tol=opts.mode_tol,
            mode_max_iter=opts.mode_max_iter,
        )
        state["z0"] = mode.mode
        return -val

    x_hat, fval, converged, trace = _maximize_with_restarts(
        neg, fm.pack(theta0.unconstrained()), opts, "ml"
    )
    theta_hat = ParamVec.from_unconstrained(layout, fm.full(x_hat))
    notes = _boundary_warnings(model, theta_hat)

    mc_se = float("nan")
    ess = float("nan")
    if method == "ela":
        est, _ = ela_marginal_impl(model, theta_hat, B, crn, z0=state["z0"])
        loglik = est.loglik
        mc_se, ess = est.mc_se, est.ess
        if est.weights_degenerate:
            notes.append(
                f"importance weights degenerate at the optimum "
                f"(ESS {est.ess:.1f} of B={B}); increase B"
            )
    else:
        loglik, _ = la_marginal_with_mode(model, theta_hat, z0=state["z0"])

    cov = se = None
    if converged and opts.compute_se:
        if method == "ela":

            def _info_free(Bk):
                crn_se = CrnDraws.from_seed(opts.seed, Bk, model.d, stream=_STREAM_SE_Z)
                inf = ela_information(model, theta_hat, Bk, crn_se, scale="unconstrained")
                return inf.info[np.ix_(fm.free_idx, fm.free_idx)]

            cov_u, B_se = _cov_with_escalation(_info_free, B_se, opts, notes, "parameter")
        else:
            info_free = _la_information_unconstrained(lambda x: -neg(x), x_hat)
            cov_u = _invert_information(info_free, notes, opts.force_se, "parameter")
        if cov_u is not None:
            cov_free = _natural_cov_from_unconstrained(cov_u, theta_hat, fm.free_idx)
            cov = _embed_cov(cov_free, fm.free_idx, fm.full_size)
            se = np.sqrt(np.maximum(np.diag(cov), 0.0))
    elif not converged:
        notes.append("fit did not converge; no standard errors computed")

    return FitResult(
        family=model.family,
        method=method,
        estimand="ml",
        names=layout.names,
        values=theta_hat.natural(),
        estimates=theta_hat,
        cov=cov,
        se=se,
        converged=converged,
        loglik_at_opt=float(loglik),
        ml_loglik_at_opt=float(loglik),
        B_point=B,
        B_tau=None,
        B_se=B_se,
        seeds={"point": opts.seed, "se": opts.seed},
        fixed=dict(opts.fixed),
        warnings=notes,
        trace=trace,
        mc_se=mc_se,
        ess=ess,
    )


def fit_reml(model, theta0=None, B=50, opts=None, method="ela"):
    """Alternate dispersion and fixed-effect blocks to joint stationarity.

    The dispersion block maximizes the restricted objective (which does not
    involve beta); the fixed-effect block then maximizes the marginal
    objective at the fitted dispersion. Standard errors: restricted
    information for tau, beta block of the full information inverse.
    """
    opts = opts or FitOptions()
    theta0 = theta0 if theta0 is not None else model.default_start()
    layout = model.layout
    p, q = layout.p, layout.q
    fm = _FreeMap(layout, opts.fixed)
    free_beta = fm.free_idx[fm.free_idx < p]
    free_tau = fm.free_idx[fm.free_idx >= p]
    B = int(B)
    B_tau = opts.resolved_B_tau(B)
    B_se = opts.resolved_B_se(B)
    crn_z = CrnDraws.from_seed(opts.seed, B, model.d, stream=_STREAM_POINT_Z)
    crn_psi = CrnDraws.from_seed(
        opts.seed, B_tau, p + model.d, stream=_STREAM_POINT_PSI
    )
    state = {"z0": None, "psi0": None}
    x_full = fm.full(fm.pack(theta0.unconstrained()))

    def neg_restricted(tau_free):
        x = x_full.copy()
        x[free_tau] = tau_free
        tau_nat = ParamVec.from_unconstrained(layout, x).tau_natural
        if method == "ela":
            est, mode = ela_restricted_impl(
                model, tau_nat, B_tau, crn_psi, psi0=state["psi0"], tol=opts.mode_tol,
                mode_max_iter=opts.mode_max_iter,
            )
            state["psi0"] = mode.mode
            return -est.loglik
        val, mode = la_restricted_with_mode(
            model, tau_nat, psi0=state["psi0"], tol=opts.mode_tol,
            mode_max_iter=opts.mode_max_iter,
        )
        state["psi0"] = mode.mode
        return -val

    def neg_marginal(beta_free):
        x = x_full.copy()
        x[free_beta] = beta_free
        theta = ParamVec.from_unconstrained(layout, x)
        if method == "ela":
            est, mode = ela_marginal_impl(
                model, theta, B, crn_z, z0=state["z0"], tol=opts.mode_tol,
                mode_max_iter=opts.mode_max_iter,
            )
            state["z0"] = mode.mode
            return -est.loglik
        val, mode = la_marginal_with_mode(
            model, theta, z0=state["z0"], tol=opts.mode_tol,
            mode_max_iter=opts.mode_max_iter,
        )
        state["z0"] = mode.mode
        return -val

    converged = False
    r_val = float("nan")
    traces = []
    for cycle in range(opts.max_cycles):
        tau_hat, r_fun, tau_ok, tr_tau = _maximize_with_restarts(
            neg_restricted, x_full[free_tau], opts, f"reml-tau-{cycle}"
        )
        moved_tau = (
            float(np.max(np.abs(tau_hat - x_full[free_tau]))) if free_tau.size else 0.0
        )
        x_full[free_tau] = tau_hat
        beta_hat, _, beta_ok, tr_beta = _maximize(
            neg_marginal, x_full[free_beta], opts, f"reml-beta-{cycle}"
        )
        moved_beta = (
            float(np.max(np.abs(beta_hat - x_full[free_beta])))
            if free_beta.size
            else 0.0
        )
        x_full[free_beta] = beta_hat
        traces = [tr_tau, tr_beta]
        r_val = -r_fun
        if max(moved_tau, moved_beta) < opts.tol and tau_ok and beta_ok:
            converged = True
            break
        if cycle == 0 and tau_ok and beta_ok and free_beta.size == 0:
            # nothing couples back into the dispersion objective
            converged = True
            break

    theta_hat = ParamVec.from_unconstrained(layout, x_full)
    tau_nat_hat = theta_hat.tau_natural
    notes = _boundary_warnings(model, theta_hat)
    if not converged:
        notes.append(
            f"block alternation did not reach joint stationarity within "
            f"{opts.max_cycles} cycles"
        )

    mc_se = float("nan")
    ess = float("nan")
    if method == "ela":
        est_r, _ = ela_restricted_impl(
            model, tau_nat_hat, B_tau, crn_psi, psi0=state["psi0"]
        )
        r_val = est_r.loglik
        mc_se, ess = est_r.mc_se, est_r.ess
        if est_r.weights_degenerate:
            notes.append(
                f"importance weights degenerate at the optimum "
                f"(ESS {est_r.ess:.1f} of B={B_tau}); increase B"
            )
        ml_est, _ = ela_marginal_impl(model, theta_hat, B, crn_z, z0=state["z0"])
        ml_val = ml_est.loglik
    else:
        r_val, _ = la_restricted_with_mode(model, tau_nat_hat, psi0=state["psi0"])
        ml_val, _ = la_marginal_with_mode(model, theta_hat, z0=state["z0"])

    cov = se = None
    if converged and opts.compute_se:
        m = p + q
        free_tau_local = free_tau - p
        if method == "ela":

            def _j_free(Bk):
                crn_se_psi = CrnDraws.from_seed(
                    opts.seed, Bk, p + model.d, stream=_STREAM_SE_PSI
                )
                inf_tau = ela_reml_information(
                    model, tau_nat_hat, Bk, crn_se_psi, scale="unconstrained"
                )
                return inf_tau.info[np.ix_(free_tau_local, free_tau_local)]

            def _i_free(Bk):
                crn_se_z = CrnDraws.from_seed(
                    opts.seed, Bk, model.d, stream=_STREAM_SE_Z
                )
                inf_full = ela_information(
                    model, theta_hat, Bk, crn_se_z, scale="unconstrained"
                )
                return inf_full.info[np.ix_(fm.free_idx, fm.free_idx)]

            cov_tau_u, B_se_tau = _cov_with_escalation(
                _j_free, B_se, opts, notes, "dispersion"
            )
            cov_full_u, B_se_full = _cov_with_escalation(
                _i_free, B_se, opts, notes, "parameter"
            )
            B_se = max(B_se_tau, B_se_full)
        else:
            J_free = _la_information_unconstrained(
                lambda tx: -neg_restricted(tx), x_full[free_tau]
            )
            I_free = _la_information_unconstrained(
                lambda x: _la_ml_objective(model, layout, fm, x, state), fm.pack(x_full)
            )
            cov_tau_u = _invert_information(J_free, notes, opts.force_se, "dispersion")
            cov_full_u = _invert_information(I_free, notes, opts.force_se, "parameter")
        if cov_tau_u is not None and cov_full_u is not None:
            cov = np.zeros((m, m))
            nbeta = free_beta.size
            if nbeta:
                cov_beta_u = cov_full_u[:nbeta, :nbeta]
                cov_beta = _natural_cov_from_unconstrained(
                    cov_beta_u, theta_hat, free_beta
                )
                cov[np.ix_(free_beta, free_beta)] = cov_beta
            if free_tau.size:
                cov_tau = _natural_cov_from_unconstrained(
                    cov_tau_u, theta_hat, free_tau
                )
                cov[np.ix_(free_tau, free_tau)] = cov_tau
            se = np.sqrt(np.maximum(np.diag(cov), 0.0))
    elif not converged:
        notes.append("fit did not converge; no standard errors computed")

    return FitResult(
        family=model.family,
        method=method,
        estimand="reml",
        names=layout.names,
        values=theta_hat.natural(),
        estimates=theta_hat,
        cov=cov,
        se=se,
        converged=converged,
        loglik_at_opt=float(r_val),
        ml_loglik_at_opt=float(ml_val),
        B_point=B,
        B_tau=B_tau,
        B_se=B_se,
        seeds={"point": opts.seed, "se": opts.seed},
        fixed=dict(opts.fixed),
        warnings=notes,
        trace={"blocks": traces},
        mc_se=mc_se,
        ess=ess,
    )


def _la_ml_objective(model, layout, fm, x, state):
    theta = ParamVec.from_unconstrained(layout, fm.full(x))
    val, mode = la_marginal_with_mode(model, theta, z0=state["z0"])
    state["z0"] = mode.mode
    return val


def lrt(fit_full, fit_null):
    """Likelihood ratio statistic 2*(l_full - l_null) and degrees of freedom.

    Both fits must come from the same family with the same draw seed and B
    so the Monte Carlo objectives are comparable; the null must nest in the
    full fit through extra fixed coordinates.
    """
    if fit_full.family != fit_null.family:
        raise FitError("likelihood ratio test requires the same model family")
    if fit_full.seeds["point"] != fit_null.seeds["point"] or fit_full.B_point != fit_null.B_point:
        raise FitError(
            "likelihood ratio test requires the same draw seed and B for both fits"
        )
    extra = set(fit_null.fixed) - set(fit_full.fixed)
    if set(fit_full.fixed) - set(fit_null.fixed):
        raise FitError("null fit must nest inside the full fit")
    statistic = 2.0 * (fit_full.ml_loglik_at_opt - fit_null.ml_loglik_at_opt)
    if statistic < -1e-6:
        raise FitError(
            f"negative likelihood ratio statistic ({statistic:.3e}); "
            "one of the optimizations failed"
        )
    return max(statistic, 0.0), len(extra)


@dataclass(frozen=True)
class DeltaMap:
    """Smooth reparameterization for first-order covariance propagation."""

    names: tuple
    fn: object

    def __call__(self, values):
        return np.asarray(self.fn(np.asarray(values, dtype=float)), dtype=float)


def matern_extension(names):
    """Appends the log-range style coordinate xi = (-log 2pi - alpha - phi)/2
    implied by the alternative spatial covariance parameterization."""
    i_phi, i_alpha = names.index("phi"), names.index("alpha")

    def fn(v):
        xi = 0.5 * (-np.log(2.0 * np.pi) - v[i_alpha] - v[i_phi])
        return np.concatenate([v, [xi]])

    return DeltaMap(names=tuple(names) + ("xi",), fn=fn)


def delta_transform(fit, dmap):
    """Map a fit through a smooth reparameterization; cov -> J cov J^T."""
    values = dmap(fit.values)
    J = central_fd_grad(dmap, np.asarray(fit.values, dtype=float))
    notes = list(fit.warnings)
    if np.linalg.matrix_rank(J) < min(J.shape):
        notes.append("delta-method Jacobian is singular")
    cov = se = None
    if fit.cov is not None:
        cov = J @ fit.cov @ J.T
        cov = 0.5 * (cov + cov.T)
        se = np.sqrt(np.maximum(np.diag(cov), 0.0))
    estimates = None
    if tuple(dmap.names) == tuple(fit.names) and fit.estimates is not None:
        try:
            estimates = ParamVec.from_natural_vector(fit.estimates.layout, values)
        except ValueError:
            estimates = None
    return replace(
        fit,
        names=tuple(dmap.names),
        values=values,
        estimates=estimates,
        cov=cov,
        se=se,
        warnings=notes,
    )
