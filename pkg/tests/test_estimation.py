import dataclasses

import numpy as np
import pytest
from scipy import special

from conftest import fd_gradient, fd_jacobian
from zabs.distributions import RbsParams, ZabsParams, rbs_logpdf, zabs_logpdf
from zabs.errors import ConvergenceError, DomainError, ModelSpecError, RankDeficientError
from zabs.estimation import (
    BoundModel, FitOptions, fisher_information, fit, hessian, inverse_information_blockwise,
    lambda_closed_form, lambda_integral, lambda_vector, loglik, quad_tolerance, score, starting_values,
    wald_inference,
)
from zabs.model import ModelSpec, custom, exp_ratio, linear
from zabs.synthetic import FUMCORN, SIMPLE


def _zabs_data(n, rng, nu=0.3):
    x = rng.uniform(-1, 1, n)
    y = np.where(rng.random(n) < nu, 0.0, rng.gamma(2.0, 1.0, n))
    return {"x": x, "y": y}


def test_single_observation_loglik():
    m = ModelSpec.build(with_zeros=False)
    theta = np.array([np.log(2.0), np.log(3.0)])
    assert loglik(theta, m, {"y": np.array([1.3])}) == pytest.approx(
        rbs_logpdf(1.3, RbsParams(2.0, 3.0)), rel=1e-13
    )


def test_loglik_matches_sum_of_logpdf():
    m = ModelSpec.build(linear("x"), linear("x"), linear("x"))
    for seed in range(20):
        rng = np.random.default_rng(seed)
        data = _zabs_data(30, rng)
        theta = rng.normal(0, 0.5, 6)
        bm = BoundModel(m, data)
        st = bm.state(theta)
        ref = np.sum(zabs_logpdf(data["y"], ZabsParams.of(st.mu, st.sigma, st.nu)))
        assert bm.loglik(theta) == pytest.approx(ref, abs=1e-10)


def test_loglik_parts_add_up(simple_data, simple_fit):
    bm = BoundModel(SIMPLE.model, simple_data)
    t = simple_fit.theta
    assert bm.loglik(t, "zero") + bm.loglik(t, "positive") == pytest.approx(bm.loglik(t), abs=1e-10)


def test_biaxial_mle_is_local_max(biaxial, biaxial_model, biaxial_fit):
    t = biaxial_fit.theta
    np.testing.assert_allclose(t, [1.276, 47.954, 9.817], rtol=5e-4)
    ll = loglik(t, biaxial_model, biaxial)
    for k in range(3):
        for d in (-1e-3, 1e-3):
            p = t.copy()
            p[k] += d
            assert loglik(p, biaxial_model, biaxial) <= ll


def test_score_zero_at_mle(simple_data, simple_fit, biaxial, biaxial_model, biaxial_fit):
    assert np.max(np.abs(score(simple_fit.theta, SIMPLE.model, simple_data))) < 1e-6
    assert np.max(np.abs(score(biaxial_fit.theta, biaxial_model, biaxial))) < 1e-6


def test_pure_bs_model_has_no_gamma_block(simple_data):
    pos = {k: v[simple_data["y"] > 0] for k, v in simple_data.items()}
    m_bs = ModelSpec.build(linear("x"), linear("z"), with_zeros=False)
    m_za = SIMPLE.model
    theta = np.array([1.0, 0.4, 1.2, -0.3])
    u_bs = score(theta, m_bs, pos)
    assert u_bs.size == 4
    full = np.concatenate([theta, [0.2, 0.1]])
    mixed = dict(pos)
    mixed["y"] = np.concatenate([pos["y"], [0.0]])
    for k in ("x", "z"):
        mixed[k] = np.concatenate([pos[k], [0.0]])
    np.testing.assert_allclose(score(full, m_za, mixed)[:4], u_bs, rtol=1e-12)


@pytest.mark.parametrize("link", ["log", "sqrt", "identity"])
def test_score_and_hessian_other_positive_links(link):
    rng = np.random.default_rng(3)
    n = 60
    x = rng.uniform(0.5, 1.5, n)
    m = ModelSpec.build(linear("x"), linear(), linear("x"), mean_link=link,
                        precision_link=link, zeroprob_link="cloglog")
    data = {"x": x, "y": np.where(rng.random(n) < 0.3, 0.0, rng.gamma(3, 1, n))}
    theta = np.array([1.0, 0.5, 2.0, -0.5, 0.3])
    bm = BoundModel(m, data)
    f = lambda t: bm.loglik(t)
    np.testing.assert_allclose(bm.score(bm.state(theta)), fd_gradient(f, theta), rtol=1e-5, atol=1e-7)
    H = fd_jacobian(lambda t: bm.score(bm.state(t)), theta)
    np.testing.assert_allclose(bm.hessian(bm.state(theta)), H, rtol=1e-4, atol=1e-5)


def test_custom_predictor_finite_difference_jacobian():
    rng = np.random.default_rng(4)
    n = 80
    w = rng.uniform(10, 80, n)
    # same functional form as exp_ratio, supplied as a user function
    f = lambda cov, b: b[0] * np.exp(b[1] / cov[:, 0])
    mc = ModelSpec.build(custom(f, ["w"], 2, start=(1.0, 40.0)), mean_link="identity",
                         precision_link="identity", with_zeros=False)
    me = ModelSpec.build(exp_ratio("w"), mean_link="identity", precision_link="identity",
                         with_zeros=False)
    data = {"w": w, "y": 1.3 * np.exp(48 / w) * rng.gamma(10, 0.1, n)}
    theta = np.array([1.2, 45.0, 8.0])
    np.testing.assert_allclose(score(theta, mc, data), score(theta, me, data), rtol=1e-6)
    np.testing.assert_allclose(hessian(theta, mc, data), hessian(theta, me, data), rtol=1e-5)
    fc, fe = fit(mc, data), fit(me, data)
    np.testing.assert_allclose(fc.theta, fe.theta, rtol=1e-6)


def test_hessian_block_structure(simple_data):
    H = hessian(SIMPLE_THETA_START, SIMPLE.model, simple_data)
    np.testing.assert_array_equal(H[:4, 4:], 0.0)
    np.testing.assert_allclose(H, H.T, rtol=1e-12, atol=1e-12)


SIMPLE_THETA_START = np.array([0.8, 0.3, 1.2, -0.2, -0.3, 0.5])


def test_intercept_only_zero_block_hand_check():
    data = {"y": np.array([0.0, 1.0])}
    m = ModelSpec.build()
    g0 = 0.3
    theta = np.array([0.0, 0.0, g0])
    nu, phi = special.ndtr(g0), np.exp(-0.5 * g0**2) / np.sqrt(2 * np.pi)
    want = -g0 * phi * (1 / nu - 1 / (1 - nu)) + phi**2 * (-1 / nu**2 - 1 / (1 - nu) ** 2)
    assert hessian(theta, m, data)[2, 2] == pytest.approx(want, rel=1e-12)


def test_fisher_zero_block_intercept_only():
    rng = np.random.default_rng(0)
    data = {"y": np.where(rng.random(50) < 0.4, 0.0, rng.gamma(2, 1, 50))}
    g0 = -0.2
    nu, phi = special.ndtr(g0), np.exp(-0.5 * g0**2) / np.sqrt(2 * np.pi)
    info = fisher_information(np.array([0.1, 0.5, g0]), ModelSpec.build(), data)
    assert info[2, 2] == pytest.approx(50 * phi**2 / (nu * (1 - nu)), rel=1e-12)


def test_fisher_symmetric_psd_and_blockwise_inverse(simple_data, simple_fit):
    info = fisher_information(simple_fit.theta, SIMPLE.model, simple_data)
    np.testing.assert_allclose(info, info.T, rtol=1e-14)
    assert np.linalg.eigvalsh(info)[0] > 0
    inv = inverse_information_blockwise(simple_fit.theta, SIMPLE.model, simple_data)
    np.testing.assert_allclose(inv, np.linalg.inv(info), rtol=1e-8, atol=1e-12)


def test_lambda_positive_and_scaling():
    for mu, sigma in [(1.0, 0.3), (2.0, 5.0), (0.4, 80.0)]:
        lam = lambda_integral(mu, sigma)
        assert lam > 0
        for c in (2.0, 10.0):
            assert lambda_integral(c * mu, sigma) == pytest.approx(lam / c**2, rel=1e-8)
    mu = np.array([0.5, 1.0, 3.0])
    np.testing.assert_allclose(lambda_vector(mu, 2.0), [lambda_integral(m, 2.0) for m in mu], rtol=1e-8)


def test_lambda_tolerance_env(monkeypatch):
    assert quad_tolerance() == 1e-9
    monkeypatch.setenv("ZABS_QUAD_TOL", "1e-6")
    assert quad_tolerance() == 1e-6
    monkeypatch.setenv("ZABS_QUAD_TOL", "banana")
    with pytest.raises(ValueError):
        quad_tolerance()


def test_lambda_domain():
    with pytest.raises(DomainError):
        lambda_integral(-1.0, 1.0)


@pytest.mark.parametrize("link", ["probit", "logit", "cloglog"])
def test_intercept_only_nu_hat_is_zero_fraction(link):
    rng = np.random.default_rng(12)
    data = _zabs_data(137, rng, 0.35)
    res = fit(ModelSpec.build(zeroprob_link=link), data)
    n0 = int(np.sum(data["y"] == 0))
    nu_hat = BoundModel(res.model, data).state(res.theta).nu[0]
    assert nu_hat == pytest.approx(n0 / 137, abs=1e-12)


def test_separate_and_joint_agree(simple_data):
    tight = dict(tol_score=1e-10, tol_loglik=1e-14)
    sep = fit(SIMPLE.model, simple_data, FitOptions(separate=True, **tight))
    joint = fit(SIMPLE.model, simple_data, FitOptions(separate=False, **tight))
    np.testing.assert_allclose(sep.theta, joint.theta, atol=1e-8)


def test_response_scaling_equivariance(simple_data, simple_fit):
    c = 7.5
    scaled = dict(simple_data)
    scaled["y"] = simple_data["y"] * c
    tight = FitOptions(tol_score=1e-10, tol_loglik=1e-14)
    a = fit(SIMPLE.model, simple_data, tight)
    b = fit(SIMPLE.model, scaled, tight)
    shift = np.zeros(a.dim)
    shift[0] = np.log(c)
    np.testing.assert_allclose(b.theta, a.theta + shift, atol=1e-8)
    np.testing.assert_allclose(b.se, a.se, rtol=1e-8)
    za, zb = wald_inference(a).z, wald_inference(b).z
    np.testing.assert_allclose(zb[1:], za[1:], rtol=1e-8)


def test_monotone_loglik_along_trace(simple_fit):
    for part in ("positive", "zero"):
        ll = [r.loglik for r in simple_fit.trace if r.part == part]
        assert np.all(np.diff(ll) >= -1e-12)


def test_synthetic_recovery_large_n():
    rng = np.random.default_rng(2024)
    data = SIMPLE.simulate(5000, rng)
    res = fit(SIMPLE.model, data)
    assert np.all(np.abs(res.theta - SIMPLE.theta) < 4 * res.se)


def test_fumcorn_like_fit_is_significant():
    data = FUMCORN.simulate(300, np.random.default_rng(1))
    table = wald_inference(fit(FUMCORN.model, data))
    assert np.all(np.abs(table.z) > 2.5)
    assert np.all(table.p_value < 0.01)


def test_probit_fit_with_saturated_zero_probabilities():
    # the zero predictor reaches about 11, so Phi(eta) is exactly 1.0 in double
    # precision over part of the covariate range
    model = ModelSpec.build(linear("x"), linear(), linear("x"), zeroprob_link="probit")
    theta = np.array([0.5, 0.3, 1.0, -1.0, 1.2])
    rng = np.random.default_rng(11)
    x = rng.uniform(0, 10, 400)
    nu = special.ndtr(theta[3] + theta[4] * x)
    assert np.any(nu == 1.0)
    mu, sigma = np.exp(theta[0] + theta[1] * x), np.exp(theta[2])
    alpha, beta = np.sqrt(2 / sigma), sigma * mu / (sigma + 1)
    z = rng.standard_normal(400)
    w = alpha * z / 2
    positive = beta * (w + np.sqrt(w**2 + 1)) ** 2
    data = {"x": x, "y": np.where(rng.uniform(size=400) < nu, 0.0, positive)}
    res = fit(model, data)
    assert res.converged
    bm = BoundModel(model, data)
    np.testing.assert_allclose(bm.score(bm.state(res.theta)), 0, atol=1e-5)
    assert np.isfinite(bm.loglik(res.theta))


def test_validation_errors():
    rng = np.random.default_rng(1)
    data = _zabs_data(40, rng)
    with pytest.raises(ModelSpecError, match="zero-probability"):
        fit(ModelSpec.build(with_zeros=False), data)
    positive = {"y": rng.gamma(2, 1, 40)}
    with pytest.raises(ModelSpecError):
        fit(ModelSpec.build(), positive)
    with pytest.raises(ModelSpecError):
        fit(ModelSpec.build(), {"y": np.zeros(10)})
    with pytest.raises(ModelSpecError):
        fit(ModelSpec.build(with_zeros=False), {"y": np.array([1.0, 2.0])})


def test_rank_deficiency_names_block():
    rng = np.random.default_rng(2)
    data = _zabs_data(50, rng)
    data["x2"] = 2 * data["x"]
    with pytest.raises(RankDeficientError, match="beta"):
        fit(ModelSpec.build(linear("x", "x2")), data)


def test_nonconvergence_carries_trace(simple_data):
    with pytest.raises(ConvergenceError) as err:
        fit(SIMPLE.model, simple_data, FitOptions(max_iter=1))
    assert len(err.value.trace) == 1


def test_starting_values_are_valid(simple_data, biaxial, biaxial_model):
    for m, d in ((SIMPLE.model, simple_data), (biaxial_model, biaxial)):
        bm = BoundModel(m, d)
        assert np.isfinite(bm.loglik(starting_values(bm)))


def test_aic(simple_fit):
    assert simple_fit.aic == pytest.approx(-2 * simple_fit.loglik + 2 * 6)


def test_covariance_option(biaxial, biaxial_model, biaxial_fit):
    exp = fit(biaxial_model, biaxial)
    np.testing.assert_allclose(exp.theta, biaxial_fit.theta, rtol=1e-8)
    H = hessian(biaxial_fit.theta, biaxial_model, biaxial)
    np.testing.assert_allclose(biaxial_fit.inv_info, np.linalg.inv(-H), rtol=1e-8)
    with pytest.raises(ValueError):
        FitOptions(covariance="sandwich")


def test_wald_levels(simple_fit):
    zero = wald_inference(simple_fit, 0.0)
    np.testing.assert_allclose(zero.upper - zero.lower, 0.0, atol=1e-15)
    widths = [np.mean(wald_inference(simple_fit, lv).upper - wald_inference(simple_fit, lv).lower)
              for lv in (0.5, 0.9, 0.99, 0.999999)]
    assert np.all(np.diff(widths) > 0)
    assert np.all(np.isinf(wald_inference(simple_fit, 1.0).upper))
    with pytest.raises(ConvergenceError):
        wald_inference(dataclasses.replace(simple_fit, converged=False))


@pytest.mark.slow
def test_wald_coverage():
    rng = np.random.default_rng(77)
    cov = SIMPLE.covariates(300, rng)
    hits = np.zeros(SIMPLE.theta.size)
    runs = 500
    for _ in range(runs):
        res = fit(SIMPLE.model, SIMPLE.simulate(300, rng, cov))
        t = wald_inference(res)
        hits += (t.lower <= SIMPLE.theta) & (SIMPLE.theta <= t.upper)
    assert np.all(np.abs(hits / runs - 0.95) <= 0.03)


def test_lambda_closed_form_matches_quadrature():
    rng = np.random.default_rng(6)
    for mu, sigma in zip(rng.uniform(0.1, 20, 25), np.exp(rng.uniform(-6, 8, 25))):
        assert lambda_closed_form(mu, sigma) == pytest.approx(lambda_integral(mu, sigma), rel=1e-9)


def test_quadrature_lambda_fit_agrees(biaxial, biaxial_model, biaxial_fit):
    exp_closed = fit(biaxial_model, biaxial)
    exp_quad = fit(biaxial_model, biaxial, FitOptions(lambda_method="quadrature"))
    np.testing.assert_allclose(exp_quad.theta, exp_closed.theta, rtol=1e-9)
    np.testing.assert_allclose(exp_quad.inv_info, exp_closed.inv_info, rtol=1e-7)
    with pytest.raises(ValueError):
        FitOptions(lambda_method="simpson")
