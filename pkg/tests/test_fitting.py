import numpy as np
import pytest
from scipy.optimize import minimize

from elaml import (
    CrnDraws,
    DeltaMap,
    FitError,
    FitOptions,
    ParamVec,
    build_model,
    delta_transform,
    fit_ml,
    fit_reml,
    lrt,
    matern_extension,
)
from elaml.designs import cluster_design
from elaml.ela import ela_marginal_impl

from .oracles import (
    balanced_one_way_reml,
    fd_gradient,
    lmm_marginal_loglik,
    toy_gh_mle,
)


def _exact_normal_mle(model):
    def exact(x):
        return lmm_marginal_loglik(
            model.dataset.y, model.X, model._G, x[:1], np.exp(x[1]), np.exp(x[2])
        )

    res = minimize(
        lambda x: -exact(x),
        np.array([0.3, 0.0, 0.0]),
        method="Nelder-Mead",
        options={"xatol": 1e-11, "fatol": 1e-13, "maxiter": 5000},
    )
    return np.array([res.x[0], np.exp(res.x[1]), np.exp(res.x[2])])


def test_fit_ml_normal_matches_closed_form(normal_model):
    mle = _exact_normal_mle(normal_model)
    for B in (1, 7, 40):
        fit = fit_ml(normal_model, B=B, opts=FitOptions(seed=3, compute_se=False))
        assert fit.converged
        np.testing.assert_allclose(fit.values, mle, atol=1e-5)


def test_fit_ml_toy_matches_quadrature_mle():
    rng = np.random.default_rng(31)
    template = build_model("bernoulli_cluster_toy", cluster_design(25))
    truth = ParamVec.from_natural(template.layout, [0.3], [1.2])
    model = build_model(
        "bernoulli_cluster_toy", template.simulate_response(truth, rng)
    )
    oracle = toy_gh_mle(model.dataset.y)
    fit = fit_ml(model, B=10000, opts=FitOptions(seed=5, compute_se=False))
    assert fit.converged
    np.testing.assert_allclose(fit.values, oracle, atol=1e-2)


def test_fit_reml_normal_matches_closed_form_variance_components(normal_model):
    ds = normal_model.dataset
    su, phi = balanced_one_way_reml(ds.y, ds.groups["group"], 8, 4)
    fit = fit_reml(normal_model, B=20, opts=FitOptions(seed=3, compute_se=False))
    assert fit.converged
    assert fit.values[1] == pytest.approx(su, abs=1e-6)
    assert fit.values[2] == pytest.approx(phi, abs=1e-6)


def test_single_mode_draw_fit_reproduces_laplace_fit(toy_model, monkeypatch):
    fit_la = fit_ml(toy_model, B=1, opts=FitOptions(seed=0, compute_se=False), method="la")
    # CRN with B=1 at u=0 makes the corrected objective exactly the Laplace one
    import elaml.fitting as F

    crn_zero = CrnDraws(u=np.zeros((1, toy_model.d)), seed=0)

    class _ZeroDraws:
        @staticmethod
        def from_seed(*args, **kwargs):
            return crn_zero

    monkeypatch.setattr(F, "CrnDraws", _ZeroDraws)
    fit_b1 = fit_ml(toy_model, B=1, opts=FitOptions(seed=0, compute_se=False))
    np.testing.assert_allclose(fit_b1.values, fit_la.values, atol=1e-6)


def test_gradient_at_optimum_invariant(normal_model):
    fit = fit_ml(normal_model, B=25, opts=FitOptions(seed=4, compute_se=False))
    assert fit.converged
    crn = CrnDraws.from_seed(4, 25, normal_model.d)

    def objective(x):
        theta = ParamVec.from_unconstrained(normal_model.layout, x)
        est, _ = ela_marginal_impl(normal_model, theta, 25, crn)
        return est.loglik

    g = fd_gradient(objective, fit.estimates.unconstrained())
    assert np.max(np.abs(g)) <= 1e-4 * (1 + abs(fit.loglik_at_opt))


def test_fit_determinism(normal_model):
    a = fit_ml(normal_model, B=13, opts=FitOptions(seed=8))
    b = fit_ml(normal_model, B=13, opts=FitOptions(seed=8))
    np.testing.assert_array_equal(a.values, b.values)
    np.testing.assert_array_equal(a.se, b.se)
    assert a.loglik_at_opt == b.loglik_at_opt


def test_fixed_coordinates_are_honored(normal_model):
    fit = fit_ml(
        normal_model,
        B=10,
        opts=FitOptions(seed=1, fixed={"phi": 0.8}, compute_se=False),
    )
    assert fit.value("phi") == pytest.approx(0.8, abs=1e-12)
    assert fit.fixed == {"phi": 0.8}


def test_non_convergence_result(normal_model):
    fit = fit_ml(normal_model, B=10, opts=FitOptions(seed=1, max_iter=0))
    assert not fit.converged
    assert fit.se is None
    assert any("did not converge" in w for w in fit.warnings)


def test_lrt_identity_and_df(normal_model):
    full = fit_ml(normal_model, B=10, opts=FitOptions(seed=2, compute_se=False))
    stat, df = lrt(full, full)
    assert stat == 0.0
    assert df == 0
    null = fit_ml(
        normal_model,
        B=10,
        opts=FitOptions(seed=2, fixed={"sigma_u": 0.5}, compute_se=False),
    )
    stat, df = lrt(full, null)
    assert df == 1
    assert stat >= 0.0


def test_lrt_validation(normal_model, toy_model):
    a = fit_ml(normal_model, B=10, opts=FitOptions(seed=2, compute_se=False))
    b = fit_ml(toy_model, B=10, opts=FitOptions(seed=2, compute_se=False))
    with pytest.raises(FitError, match="family"):
        lrt(a, b)
    c = fit_ml(normal_model, B=10, opts=FitOptions(seed=3, compute_se=False))
    with pytest.raises(FitError, match="seed"):
        lrt(a, c)


def test_delta_identity_map(normal_model):
    fit = fit_ml(normal_model, B=10, opts=FitOptions(seed=2))
    dmap = DeltaMap(names=fit.names, fn=lambda v: v)
    out = delta_transform(fit, dmap)
    np.testing.assert_array_equal(out.values, fit.values)
    np.testing.assert_allclose(out.cov, fit.cov, atol=1e-9)
    np.testing.assert_allclose(out.se, fit.se, atol=1e-9)
    assert out.estimates is not None


def test_delta_linear_map_scales_se(normal_model):
    fit = fit_ml(normal_model, B=10, opts=FitOptions(seed=2))
    a, b = -2.5, 1.0
    dmap = DeltaMap(names=("t0", "t1", "t2"), fn=lambda v: a * v + b)
    out = delta_transform(fit, dmap)
    np.testing.assert_allclose(out.se, abs(a) * fit.se, rtol=1e-6)
    np.testing.assert_allclose(out.values, a * fit.values + b, atol=1e-12)


def test_delta_matern_extension_formula():
    names = ("intercept", "phi", "alpha")
    dmap = matern_extension(names)
    v = np.array([1.983, -3.325, -2.489])
    out = dmap(v)
    xi = 0.5 * (-np.log(2 * np.pi) + 2.489 + 3.325)
    assert out[-1] == pytest.approx(xi)
    assert dmap.names == names + ("xi",)


def test_delta_singular_jacobian_warns(normal_model):
    fit = fit_ml(normal_model, B=10, opts=FitOptions(seed=2))
    dmap = DeltaMap(names=("only",), fn=lambda v: np.array([0.0 * v[0]]))
    out = delta_transform(fit, dmap)
    assert any("singular" in w for w in out.warnings)


def test_boundary_warning_from_fisher_z():
    from elaml.designs import salamander_design
    from elaml.fitting import _boundary_warnings

    ds = salamander_design()
    model = build_model("pooled_glmm", ds)
    theta = ParamVec.from_natural(
        model.layout, np.zeros(5), [1.0, 1.0, 0.0, 1.0, 1.0, 0.995]
    )
    notes = _boundary_warnings(model, theta)
    assert any("rho_m" in w and "pooled_shared_glmm" in w for w in notes)


def test_restart_option_is_deterministic(normal_model):
    opts = FitOptions(seed=6, restarts=2, compute_se=False)
    a = fit_ml(normal_model, B=10, opts=opts)
    b = fit_ml(normal_model, B=10, opts=opts)
    np.testing.assert_array_equal(a.values, b.values)
