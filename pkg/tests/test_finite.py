"""Finite-state characteristics, point evaluation, reduction identity."""

import numpy as np
import pytest
from scipy.linalg import expm

from mfgreduce.checks import check_pair_reduction
from mfgreduce.finite import (
    eval_U,
    fiber_evolution_check,
    make_grid,
    monotone_pairing_check,
    pde_residual_slope,
    solve_characteristics,
    solve_reduced_finite,
    tangential_motion_check,
    verify_reduction_identity,
)
from mfgreduce.models import FiniteStateModel, ReducedFiniteModel, lookup
from mfgreduce.odes import IntegratorSpec

INTEG = IntegratorSpec(dt=1e-3)


def finite_A_exact(seeds, t):
    """Oracle for demo-finite-A: (s, v) = (sum X, sum V) obeys a linear system
    with matrix [[1, 1], [2, 0]]; fiber components are constant.  Exact via expm."""
    seeds = np.atleast_2d(seeds)
    A = np.array([[1.0, 1.0], [2.0, 0.0]])
    E = expm(A * t)
    s0 = seeds.sum(-1)
    sv = E @ np.stack([s0, 2 * s0])            # v(0) = sum U0 = 2 sum x
    fiber = seeds - 0.5 * s0[:, None]
    X = 0.5 * sv[0][:, None] + fiber
    V = 0.5 * sv[1][:, None] * np.ones_like(seeds)
    return X, V


class TestCharacteristics:
    def test_frozen_flow(self):
        model = FiniteStateModel(2, F=lambda X, U: np.zeros_like(X),
                                 G=lambda X, U: np.zeros_like(X), U0=lambda X: 2 * X)
        fld = solve_characteristics(model, np.array([[1.0, -3.0]]), 1.0, INTEG)
        assert np.allclose(fld.X, [1.0, -3.0])
        assert np.allclose(fld.V, [2.0, -6.0])

    def test_demo_finite_A_vs_matrix_exponential(self):
        entry = lookup("demo-finite-A")
        seeds = make_grid(-2, 2, 4, 2)
        fld = solve_characteristics(entry.model, seeds, 1.0, INTEG, t_eval=[0.0, 0.4, 1.0])
        for k, t in enumerate(fld.ts):
            Xe, Ve = finite_A_exact(seeds, t)
            assert np.abs(fld.X[k] - Xe).max() < 1e-8
            assert np.abs(fld.V[k] - Ve).max() < 1e-8

    def test_symmetric_linear_model_closed_form(self):
        # F = U, G = X, U0 = id: X(t) = V(t) = x e^t
        model = lookup("demo-finite-stationary").model
        seeds = np.array([[0.5, -1.0]])
        fld = solve_characteristics(model, seeds, 1.0, INTEG, t_eval=[1.0])
        assert np.abs(fld.X[-1] - seeds * np.e).max() < 1e-9
        assert np.abs(fld.V[-1] - seeds * np.e).max() < 1e-9


class TestEvalU:
    def test_initial_time(self):
        model = lookup("demo-finite-A").model
        pts = np.array([[1.0, 2.0], [0.0, -1.0]])
        assert np.allclose(eval_U(model, 0.0, pts, INTEG), model.U0(pts))

    def test_stationary_solution(self):
        # plugging U(t,x) = x into the equation: (F . grad) U = U = x = G, so
        # eval_U must return xhat at every time
        model = lookup("demo-finite-stationary").model
        pts = make_grid(-2, 2, 3, 2)
        for t in (0.3, 1.0):
            U = eval_U(model, t, pts, INTEG)
            assert np.abs(U - pts).max() < 1e-9

    def test_demo_finite_A_against_oracle(self):
        entry = lookup("demo-finite-A")
        pts = np.array([[1.0, 1.0], [0.5, -0.25]])
        t = 0.7
        U = eval_U(entry.model, t, pts, INTEG)
        # oracle: invert the exact (s, v) flow, U(t, xhat) = v(t)/2 (1,1)
        A = np.array([[1.0, 1.0], [2.0, 0.0]])
        E = expm(A * t)
        c = E[0, 0] + 2 * E[0, 1]   # s(t) = c s0
        s0 = pts.sum(-1) / c
        v = (E[1, 0] + 2 * E[1, 1]) * s0
        exact = 0.5 * v[:, None] * np.ones_like(pts)
        assert np.abs(U - exact).max() < 1e-8


class TestReduction:
    def test_reduced_solve_matches_projection(self):
        entry = lookup("demo-finite-A")
        model, rmap = entry.model, entry.aux["reduction_map"]
        reduced = entry.aux["reduced_closed_form"]
        seeds = make_grid(-2, 2, 3, 2)
        t_eval = np.linspace(0, 1, 5)
        full = solve_characteristics(model, seeds, 1.0, INTEG, t_eval)
        red = solve_reduced_finite(reduced, rmap.apply(seeds), 1.0, INTEG, t_eval)
        # X~ = L X and V = L* V~ along trajectories
        assert np.abs(rmap.apply(full.X) - red.X).max() < 1e-8
        assert np.abs(full.V - rmap.apply_adjoint(red.V)).max() < 1e-8

    def test_identity_demo_finite_A(self):
        entry = lookup("demo-finite-A")
        rep, per_time = verify_reduction_identity(
            entry.model, entry.aux["reduction_map"], entry.aux["reduced_closed_form"],
            grid=make_grid(-2, 2, 5, 2), times=np.linspace(0, 1, 5), integ=INTEG)
        assert rep.passed
        assert -rep.worst_margin <= 1e-6

    def test_identity_uses_extracted_model(self):
        entry = lookup("demo-finite-A")
        _, reduced = check_pair_reduction(entry.model, entry.aux["reduction_map"],
                                          samples=500, seed=0)
        rep, _ = verify_reduction_identity(
            entry.model, entry.aux["reduction_map"], reduced,
            grid=make_grid(-1, 1, 3, 2), times=[0.0, 0.5, 1.0], integ=INTEG)
        assert rep.passed

    def test_t0_slice_exact(self):
        entry = lookup("demo-finite-A")
        rmap = entry.aux["reduction_map"]
        grid = make_grid(-2, 2, 5, 2)
        lhs = entry.model.U0(grid)
        rhs = rmap.apply_adjoint(entry.aux["reduced_closed_form"].U0(rmap.apply(grid)))
        assert np.abs(lhs - rhs).max() < 1e-14


class TestGeometryChecks:
    def test_fiber_evolution(self):
        entry = lookup("demo-finite-A")
        rep = fiber_evolution_check(entry.model, entry.aux["reduction_map"], T=1.0,
                                    n_pairs=20, seed=0, integ=INTEG)
        assert rep.passed
        assert -rep.worst_margin <= 1e-8

    def test_tangential_motion(self):
        entry = lookup("demo-finite-A")
        rep = tangential_motion_check(entry.model, entry.aux["reduction_map"], T=1.0,
                                      n_seeds=10, seed=0, integ=INTEG)
        assert rep.passed

    def test_pairing_nondecreasing_for_monotone_pair(self):
        entry = lookup("demo-finite-A")
        seeds = make_grid(-2, 2, 3, 2)
        fld = solve_characteristics(entry.model, seeds, 1.0, INTEG, np.linspace(0, 1, 21))
        rep = monotone_pairing_check(fld)
        assert rep.passed


class TestPdeResidual:
    def test_stationary_solution_residual_floor(self):
        model = lookup("demo-finite-stationary").model
        grid = make_grid(-1, 1, 3, 2)
        from mfgreduce.finite import pde_residual

        sup = pde_residual(model, grid, [0.5], h=1e-3, integ=INTEG)
        assert sup <= 1e-6

    def test_demo_finite_A_slope(self):
        entry = lookup("demo-finite-A")
        grid = make_grid(-1, 1, 3, 2)
        sups, slope = pde_residual_slope(entry.model, grid, [0.3, 0.6], hs=(4e-2, 2e-2, 1e-2),
                                         integ=IntegratorSpec(dt=2e-3))
        assert slope >= 0.9, (sups, slope)
