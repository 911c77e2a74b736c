"""Demo catalog: closed forms, declared structure, Jacobian consistency."""

import numpy as np
import pytest

from mfgreduce.checks import check_jacobian_consistency, check_strong_monotonicity
from mfgreduce.core import moments, power_feature
from mfgreduce.models import build_demo_models, lookup, make_power_controls, make_power_master


REQUIRED = ["demo-finite-A", "demo-power", "demo-quadratic", "demo-controls-quad",
            "demo-power-controls", "demo-noise"]


def test_catalog_contains_required_entries():
    catalog = build_demo_models()
    for name in REQUIRED:
        assert name in catalog


def test_finite_A_metadata():
    entry = lookup("demo-finite-A")
    assert entry.model.N == 2
    assert entry.aux["reduction_map"].n == 1


def test_power_h_value():
    model = lookup("demo-power").model
    # (1/2) 2^2 - 1 = 1
    assert model.h(1.0, 2.0) == pytest.approx(1.0, abs=1e-15)


def test_quadratic_h_value():
    model = lookup("demo-quadratic").model
    z = np.array([1.0, 0.0, 0.0])
    u = np.array([7.0, 1.0, 1.0])  # first slot is inert
    assert np.allclose(model.h(z, u), [-0.5, 1.0, 1.0])


def test_finite_A_pairing_quadratic_form():
    model = lookup("demo-finite-A").model
    rng = np.random.default_rng(0)
    x, y = rng.uniform(-5, 5, (2, 500, 2))
    U, V = rng.uniform(-5, 5, (2, 500, 2))
    pair = (np.sum((model.G(x, U) - model.G(y, V)) * (x - y), axis=-1)
            + np.sum((model.F(x, U) - model.F(y, V)) * (U - V), axis=-1))
    ds = (x - y).sum(-1)
    du = (U - V).sum(-1)
    assert np.allclose(pair, ds**2 + 0.5 * ds * du + 0.5 * du**2, atol=1e-10)
    assert pair.min() >= -1e-12  # discriminant 1/4 - 2 < 0


def test_controls_quad_closed_form_pde_residual():
    T = 1.0
    u = lambda t, x: x**2 / (2.0 * (1.0 + T - t))
    ut = lambda t, x: x**2 / (2.0 * (1.0 + T - t) ** 2)
    ux = lambda t, x: x / (1.0 + T - t)
    ts = np.linspace(0, T, 13)
    xs = np.linspace(-4, 4, 17)
    for t in ts:
        res = -ut(t, xs) + 0.5 * ux(t, xs) ** 2
        assert np.abs(res).max() <= 1e-12
    assert np.allclose(u(T, xs), 0.5 * xs**2)


def test_power_controls_initial_scalars_quadrature_oracle():
    from scipy.integrate import quad

    model = make_power_controls()  # m0 uniform quantiles on [0.5, 1.5]
    z0_exact = quad(lambda y: 0.5 * y**2, 0.5, 1.5)[0]
    assert model.z0 == pytest.approx(z0_exact, rel=1e-6)
    assert model.alpha0 == pytest.approx(z0_exact, rel=1e-6)  # q (p'-1) = p' when p = q = 2
    z0_direct = moments(model.m0, power_feature(model.p_conj))
    assert model.z0 == pytest.approx(z0_direct, abs=1e-14)


def test_power_controls_g_presets_hypotheses():
    model = make_power_controls(a_name="sqrt-slope", g_name="affine", delta=0.05)
    zs = np.linspace(0.0, 5.0, 101)
    g = model.g(zs)
    assert np.all(g >= 0)
    assert np.all(np.diff(g) >= 0)
    phis = np.linspace(1e-3, 8.0, 301)
    assert np.abs(model.a(phis)).max() < np.inf
    # the declared band: phi^{1/p} a'(phi) = delta exactly
    band_vals = phis ** (1.0 / model.p) * model.da(phis)
    assert np.allclose(band_vals, 0.05, atol=1e-12)
    d0, d1 = model.delta_band
    assert d0 < 0.05 <= d1


def test_jacobian_consistency_catalog():
    for name in ("demo-finite-A", "demo-finite-stationary", "demo-noise"):
        entry = lookup(name)
        model = entry.model
        N = model.N
        rng = np.random.default_rng(1)
        u_fix = rng.uniform(-2, 2, N)
        x_fix = rng.uniform(-2, 2, N)
        pairs = [
            (lambda x: model.F(x, u_fix), lambda x: model.jacobians["F_x"](x, u_fix)),
            (lambda u: model.F(x_fix, u), lambda u: model.jacobians["F_u"](x_fix, u)),
            (lambda x: model.G(x, u_fix), lambda x: model.jacobians["G_x"](x, u_fix)),
            (lambda u: model.G(x_fix, u), lambda u: model.jacobians["G_u"](x_fix, u)),
        ]
        if "U0_x" in model.jacobians:
            pairs.append((model.U0, model.jacobians["U0_x"]))
        for fn, jac in pairs:
            rep = check_jacobian_consistency(fn, jac, N, samples=100, seed=3, rel_tol=1e-4)
            assert rep.passed, rep.witness


def test_power_master_derivatives_match_fd():
    model = make_power_master()
    zs = np.linspace(0.1, 4.0, 7)
    us = np.linspace(-3, 3, 7)
    eps = 1e-6
    for z in zs:
        for u in us:
            if abs(u) < 0.5:
                continue  # |u|^{q-2} kinks at 0 for the fd probe only
            assert model.h_z(z, u) == pytest.approx(
                (model.h(z + eps, u) - model.h(z - eps, u)) / (2 * eps), rel=1e-4, abs=1e-6)
            assert model.h_u(z, u) == pytest.approx(
                (model.h(z, u + eps) - model.h(z, u - eps)) / (2 * eps), rel=1e-4, abs=1e-6)
            assert model.h_uu(z, u) == pytest.approx(
                (model.h_u(z, u + eps) - model.h_u(z, u - eps)) / (2 * eps), rel=1e-4, abs=1e-6)


def test_noise_model_structure():
    model = lookup("demo-noise").model
    assert model.tmap_into_box()
    rep = check_strong_monotonicity(model.F, model.G, model.N, model.alpha,
                                    samples=10_000, seed=5)
    assert rep.passed, rep.worst_margin
    # rotation-contraction: ||T|| = rho < 1
    assert np.linalg.norm(model.tmap, 2) == pytest.approx(0.7, abs=1e-12)


def test_quadratic_z_velocity_freezes_first_moment():
    model = lookup("demo-quadratic").model
    rng = np.random.default_rng(2)
    z = model.moment_set.sample(rng, (50,))
    u = rng.uniform(-4, 4, (50, 3))
    v = model.z_velocity(z, u)
    assert np.abs(v[:, 0]).max() == 0.0
