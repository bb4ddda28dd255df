import numpy as np
import pytest

from elaml import ModeError, ParamVec, build_model, joint_mode, latent_mode
from elaml.designs import salamander_design

from .oracles import lmm_conditional_mode, lmm_joint_mode


def test_latent_mode_matches_blup(normal_model):
    theta = ParamVec.from_natural(normal_model.layout, [0.4], [1.1, 0.8])
    mode = latent_mode(normal_model, theta)
    oracle = lmm_conditional_mode(
        normal_model.dataset.y, normal_model.X, normal_model._G, theta.beta, 1.1, 0.8
    )
    assert mode.converged
    np.testing.assert_allclose(mode.mode, oracle, atol=1e-8)


def test_latent_mode_fixed_point(normal_model):
    theta = ParamVec.from_natural(normal_model.layout, [0.4], [1.1, 0.8])
    mode = latent_mode(normal_model, theta)
    again = latent_mode(normal_model, theta, z0=mode.mode)
    assert again.iterations <= 1
    np.testing.assert_allclose(again.mode, mode.mode, atol=1e-12)


def test_latent_mode_matches_grid_argmax(toy_model, toy_theta):
    grid = np.linspace(-4, 4, 2000)
    vals = [toy_model.h_loglik(toy_theta, np.array([z])) for z in grid]
    zgrid = grid[int(np.argmax(vals))]
    mode = latent_mode(toy_model, toy_theta)
    assert abs(mode.mode[0] - zgrid) <= (grid[1] - grid[0])


def test_joint_mode_matches_henderson(normal_model):
    tau = np.array([1.1, 0.8])
    mode = joint_mode(normal_model, tau)
    beta_t, z_t = lmm_joint_mode(
        normal_model.dataset.y, normal_model.X, normal_model._G, *tau
    )
    np.testing.assert_allclose(mode.mode, np.concatenate([beta_t, z_t]), atol=1e-8)


def test_joint_mode_fixed_point(normal_model):
    tau = np.array([1.1, 0.8])
    beta_t, z_t = lmm_joint_mode(
        normal_model.dataset.y, normal_model.X, normal_model._G, *tau
    )
    mode = joint_mode(normal_model, tau, psi0=np.concatenate([beta_t, z_t]))
    assert mode.iterations <= 1


def test_joint_mode_robust_across_summer_replicates():
    template = build_model("summer_glmm", salamander_design())
    truth = ParamVec.from_natural(
        template.layout, [1.06, -3.05, -0.72, 3.77], [1.22, 1.22]
    )
    rng = np.random.default_rng(1234)
    ok = 0
    for _ in range(100):
        model = build_model("summer_glmm", template.simulate_response(truth, rng))
        try:
            mode = joint_mode(model, truth.tau_natural)
            ok += int(mode.converged)
        except ModeError:
            pass
    assert ok >= 95


def test_chol_reproduces_curvature(summer_model):
    theta = ParamVec.from_natural(
        summer_model.layout, [1.0, -2.5, -0.5, 3.0], [1.2, 1.2]
    )
    mode = latent_mode(summer_model, theta)
    _, hess = summer_model.dz(theta, mode.mode)
    omega = -hess
    err = np.max(np.abs(mode.chol @ mode.chol.T - omega))
    assert err <= 1e-8 * np.max(np.abs(omega))
    assert np.all(np.diag(mode.chol) > 0)


def test_monotone_ascent(summer_model):
    theta = ParamVec.from_natural(
        summer_model.layout, [1.0, -2.5, -0.5, 3.0], [1.2, 1.2]
    )
    mode = latent_mode(summer_model, theta, z0=2.0 * np.ones(summer_model.d))
    trace = np.array(mode.h_trace)
    assert np.all(np.diff(trace) >= 0)
    assert mode.grad_norm <= 1e-9 * (1 + abs(mode.h_at_mode))


def test_non_convergence_carries_last_iterate(normal_model):
    theta = ParamVec.from_natural(normal_model.layout, [0.4], [1.1, 0.8])
    with pytest.raises(ModeError) as err:
        latent_mode(normal_model, theta, z0=50.0 * np.ones(normal_model.d), max_iter=1)
    assert err.value.last_iterate is not None
    assert err.value.last_iterate.shape == (normal_model.d,)


def test_rank_deficient_design_is_clean_error(normal_model):
    ds = normal_model.dataset
    bad = ds.with_responses(ds.y)
    bad.X = np.column_stack([ds.X, ds.X[:, 0]])
    bad.x_names = ("intercept", "dup")
    model = build_model("normal_lmm", bad)
    with pytest.raises(ModeError, match="rank-deficient"):
        joint_mode(model, np.array([1.0, 1.0]))
