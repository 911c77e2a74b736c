"""Reduced master characteristics, boundary invariance, reconstruction,
forward-backward moment system, particle transport."""

import numpy as np
import pytest

from mfgreduce.core import ParticleCloud, moments
from mfgreduce.exceptions import GeometryError
from mfgreduce.master import (
    boundary_invariance_check,
    moment_consistency_refinement,
    reconstruct_master_value,
    solve_fb_reduced,
    solve_reduced_master,
    transport_particles,
    verify_moment_consistency,
)
from mfgreduce.models import lookup, make_power_master
from mfgreduce.odes import IntegratorSpec, ShootingSpec

INTEG = IntegratorSpec(dt=1e-3)


class TestReducedMaster:
    def test_zero_seed_is_fixed_fiber(self):
        model = lookup("demo-power").model
        sol = solve_reduced_master(model, [0.0, 0.5, 1.0, 2.0], T=1.0, integ=INTEG)
        assert np.abs(sol.Z[:, 0, 0]).max() <= 1e-10    # Z(t, 0) = 0
        assert np.abs(sol.U[:, 0, 0]).max() <= 1e-10    # g(0) = 0 and h(0, 0) = 0

    def test_terminal_slice_exact(self):
        model = lookup("demo-power").model
        sol = solve_reduced_master(model, np.linspace(0, 2, 5), T=1.0, integ=INTEG)
        assert sol.terminal_slice_exact()

    def test_riccati_closed_form_when_h_independent_of_z(self):
        # a = 1, b = 0, c = 0: U' = U^2/2, U(T) = g(z) = z, so along each
        # characteristic U(t) = z / (1 + z (T - t) / 2)
        model = make_power_master(c_name="zero")
        T = 1.0
        zs = np.array([0.5, 1.0, 2.0])
        sol = solve_reduced_master(model, zs, T=T, integ=INTEG,
                                   t_eval=np.linspace(0, T, 6))
        for k, t in enumerate(sol.ts):
            exact = zs / (1.0 + zs * (T - t) / 2.0)
            assert np.abs(sol.U[k, :, 0] - exact).max() < 1e-10

    def test_evaluator_inverts_seed_map(self):
        model = lookup("demo-power").model
        sol = solve_reduced_master(model, np.linspace(0.0, 2.5, 9), T=1.0, integ=INTEG)
        t = 0.4
        k = int(np.argmin(np.abs(sol.ts - t)))
        # evaluate at the characteristic positions: must recover the stored U
        zhat = sol.Z[k, :, 0]
        got = sol.evaluate(sol.ts[k], zhat)
        assert np.abs(got - sol.U[k, :, 0]).max() < 1e-8

    def test_terminal_evaluation_is_g(self):
        model = lookup("demo-power").model
        sol = solve_reduced_master(model, np.linspace(0.0, 2.0, 7), T=1.0, integ=INTEG)
        zq = np.array([0.3, 1.1])
        assert np.abs(sol.evaluate(1.0, zq) - model.g(zq)).max() < 1e-12

    def test_seed_map_empirical_strict_monotonicity(self):
        model = lookup("demo-power").model
        sol = solve_reduced_master(model, np.linspace(0.0, 2.0, 9), T=1.0, integ=INTEG)
        assert sol.seed_monotonicity_margin() > 0.0

    def test_quadratic_family_runs_and_stays_in_set(self):
        model = lookup("demo-quadratic").model
        z1 = np.linspace(-1.0, 1.0, 5)
        seeds = np.stack([np.ones_like(z1), z1, 0.5 * z1**2 + 0.5], axis=-1)
        sol = solve_reduced_master(model, seeds, T=1.0, integ=INTEG)
        assert sol.membership_margin >= -1e-9
        assert sol.seed_monotonicity_margin() > 0.0

    def test_hypothesis_precheck_rejects_bad_model(self):
        from mfgreduce.exceptions import InputError

        bad = make_power_master(a_name="zero", c_name="identity")  # h_z = +1
        with pytest.raises(InputError):
            solve_reduced_master(bad, [0.5], T=1.0, integ=INTEG)


class TestBoundaryInvariance:
    def test_power_zero_boundary(self):
        rep = boundary_invariance_check(lookup("demo-power").model, T=1.0, integ=INTEG)
        assert rep.passed
        assert -rep.worst_margin <= 1e-10

    def test_quadratic_parabola(self):
        rep = boundary_invariance_check(lookup("demo-quadratic").model, T=1.0, integ=INTEG)
        assert rep.passed
        assert -rep.worst_margin <= 1e-8

    def test_interior_seed_is_not_boundary_bound(self):
        # negative control: the invariance property genuinely discriminates
        model = lookup("demo-quadratic").model
        rep = boundary_invariance_check(model, boundary_seeds=np.array([[1.0, 0.0, 1.0]]),
                                        T=1.0, integ=INTEG)
        assert not rep.passed

    def test_boundary_data_terminal_compatibility(self):
        model = lookup("demo-power").model
        sol = solve_reduced_master(model, [0.0, 1.0], T=1.0, integ=INTEG)
        # f(T, z) = g(z) exactly at boundary seeds; for the shipped family the
        # boundary is {0} with g(0) = 0 and f stays 0
        assert np.abs(sol.boundary_f[-1] - 0.0).max() == 0.0
        assert np.abs(sol.boundary_f).max() <= 1e-12


class TestReconstruction:
    def test_terminal_reconstruction_matches_terminal_cost(self):
        model = lookup("demo-power").model
        sol = solve_reduced_master(model, np.linspace(0.0, 2.0, 7), T=1.0, integ=INTEG)
        cloud = ParticleCloud(np.array([-1.0, 0.5, 2.0]))
        x = 1.3
        got = reconstruct_master_value(model, sol.evaluate, 1.0, x, cloud)
        z = moments(cloud, model.feature)
        expect = float(model.feature(x) * model.g(z))
        assert got == pytest.approx(expect, abs=1e-12)

    def test_dirac_at_zero(self):
        model = lookup("demo-power").model
        sol = solve_reduced_master(model, np.linspace(0.0, 2.0, 7), T=1.0, integ=INTEG)
        cloud = ParticleCloud(np.array([0.0]))
        got = reconstruct_master_value(model, sol.evaluate, 0.5, 2.0, cloud)
        u_at_zero = sol.evaluate(0.5, np.array([0.0]))
        assert got == pytest.approx(float(model.feature(2.0) * u_at_zero[0]), abs=1e-12)

    def test_equal_moments_equal_value(self):
        model = lookup("demo-power").model
        sol = solve_reduced_master(model, np.linspace(0.0, 2.0, 7), T=1.0, integ=INTEG)
        a = ParticleCloud(np.array([-1.0, 1.0]))
        b = ParticleCloud(np.array([0.0, np.sqrt(2.0)]))  # same second moment
        va = reconstruct_master_value(model, sol.evaluate, 0.3, 0.7, a)
        vb = reconstruct_master_value(model, sol.evaluate, 0.3, 0.7, b)
        assert va == pytest.approx(vb, abs=1e-10)

    def test_geometry_error_outside_set(self):
        model = lookup("demo-quadratic").model
        sol_eval = lambda t, z: np.zeros(3)
        bad_cloud = ParticleCloud(np.array([1.0]))
        # fake a moment set violation by passing a 2-point cloud whose
        # quadratic moments sit on the parabola, then perturbing is impossible;
        # instead check the membership guard directly with a power-family cloud
        power = lookup("demo-power").model
        with pytest.raises(GeometryError):
            # negative moment cannot arise from a real cloud; drive the guard
            # through a synthetic evaluator wrapper
            reconstruct_master_value(power, sol_eval, 0.0, 0.0,
                                     ParticleCloud(np.array([0.0])), membership_tol=-1.0)


class TestFBReduced:
    def test_zero_initial_moment(self):
        model = lookup("demo-power").model
        fb = solve_fb_reduced(model, 0.0, T=1.0, integ=INTEG)
        assert fb.converged
        assert np.abs(fb.z).max() == 0.0
        assert np.abs(fb.psi).max() < 1e-10

    def test_constant_terminal_decouples(self):
        model = make_power_master(g_name="one")
        fb = solve_fb_reduced(model, 1.0, T=1.0, integ=INTEG)
        assert fb.converged and fb.iterations == 1

    def test_demo_power_richardson(self):
        model = lookup("demo-power").model
        vals = []
        for dt in (2e-3, 1e-3):
            fb = solve_fb_reduced(model, 1.0, T=1.0, integ=IntegratorSpec(dt=dt))
            assert fb.converged and fb.residual <= 1e-10
            vals.append(fb.psi0())
        assert abs(vals[0] - vals[1]) < 1e-8


class TestTransport:
    def test_zero_field(self):
        m0 = ParticleCloud(np.array([0.0, 1.0, -2.0]))
        _, clouds = transport_particles(lambda t, y: np.zeros_like(y), m0, 1.0, INTEG)
        assert np.array_equal(clouds[-1].points, m0.points)

    def test_linear_contraction_second_moment(self):
        m0 = ParticleCloud(np.linspace(-1, 1, 41))
        ts, clouds = transport_particles(lambda t, y: -y, m0, 1.0, INTEG)
        from mfgreduce.core import power_feature

        phi = power_feature(2.0)
        m_start = moments(m0, phi)
        m_end = moments(clouds[-1], phi)
        assert m_end == pytest.approx(m_start * np.exp(-2.0), rel=1e-9)

    def test_controls_quad_closed_form_flow(self):
        T = 1.0
        m0 = ParticleCloud(np.linspace(-1, 1, 11))
        ts, clouds = transport_particles(lambda t, y: -y / (1.0 + T - t), m0, T, INTEG)
        for t, cloud in zip(ts, clouds):
            exact = m0.points[:, 0] * (1.0 + T - t) / (1.0 + T)
            assert np.abs(cloud.points[:, 0] - exact).max() < 1e-10


class TestMomentConsistency:
    def test_demo_power_gap(self):
        model = lookup("demo-power").model
        m0 = ParticleCloud.uniform_quantiles(0.0, 1.0, 1000)
        z0 = moments(m0, model.feature)
        fb = solve_fb_reduced(model, z0, T=1.0, integ=INTEG)
        assert fb.converged
        rep, ts, gaps, clouds = verify_moment_consistency(model, fb, m0, INTEG)
        assert rep.passed
        assert gaps[0] == 0.0            # z0 is the particle moment by construction
        assert gaps.max() <= 1e-3

    def test_refinement_trend(self):
        model = lookup("demo-power").model
        builder = lambda M: ParticleCloud.uniform_quantiles(0.0, 1.0, M)
        sups = moment_consistency_refinement(model, builder, 1.0,
                                             [(4e-2, 500), (2e-2, 1000), (1e-2, 2000)])
        assert sups[0] > sups[1] > sups[2]
