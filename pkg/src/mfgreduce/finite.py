"""Finite-state master equation via characteristics, its reduction, and the
identity U(t, x) = L* U~(t, L x) between the two solves.

Values of U at arbitrary (t, x) are obtained by Newton inversion of the seed
map x -> X(t; x) (shooting the characteristic), never by interpolation, so the
reduction-identity test carries no interpolation bias.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .checks import CheckReport
from .core import ReductionMap
from .exceptions import NonConvergenceError
from .models import FiniteStateModel, ReducedFiniteModel
from .odes import IntegratorSpec, integrate, newton_invert_batch


def _state_dim(model) -> int:
    return model.N if isinstance(model, FiniteStateModel) else model.n


@dataclass
class CharacteristicField:
    """Trajectories (X(t, x), V(t, x)) seeded at t = 0 with V(0) = U0(x)."""

    model: object
    seeds: np.ndarray     # (B, N)
    ts: np.ndarray        # (K,)
    X: np.ndarray         # (K, B, N)
    V: np.ndarray         # (K, B, N)

    def pairing(self) -> np.ndarray:
        """<X(t,x1)-X(t,x2), V(t,x1)-V(t,x2)> for all seed pairs, per time.

        Shape (K, B*(B-1)/2).  Nondecreasing columns are the invertibility
        diagnostic for monotone data.
        """
        i, j = np.triu_indices(self.seeds.shape[0], k=1)
        dX = self.X[:, i, :] - self.X[:, j, :]
        dV = self.V[:, i, :] - self.V[:, j, :]
        return np.sum(dX * dV, axis=-1)


def solve_characteristics(model, seeds, T, integ: IntegratorSpec | None = None,
                          t_eval=None) -> CharacteristicField:
    """Integrate dX/dt = F(X, V), dV/dt = G(X, V) from X(0) = x, V(0) = U0(x)."""
    integ = integ or IntegratorSpec()
    seeds = np.atleast_2d(np.asarray(seeds, dtype=float))
    if t_eval is None:
        t_eval = np.linspace(0.0, T, 11)
    state0 = np.concatenate([seeds, model.U0(seeds)], axis=-1)
    out = integrate(model.field, state0, 0.0, T, integ, t_eval=t_eval)
    d = _state_dim(model)
    return CharacteristicField(model, seeds, out.ts, out.ys[..., :d], out.ys[..., d:])


def solve_reduced_finite(model: ReducedFiniteModel, seeds, T,
                         integ: IntegratorSpec | None = None, t_eval=None) -> CharacteristicField:
    return solve_characteristics(model, seeds, T, integ, t_eval)


def _flow(model, seeds, t, integ):
    d = _state_dim(model)
    state0 = np.concatenate([seeds, model.U0(seeds)], axis=-1)
    if t == 0.0:
        return seeds, state0[..., d:]
    out = integrate(model.field, state0, 0.0, t, integ)
    return out.ys[-1][..., :d], out.ys[-1][..., d:]


def eval_U(model, t, xhat, integ: IntegratorSpec | None = None, tol=1e-10):
    """U(t, xhat) through the implicit relation U(t, X(t; x)) = V(t; x).

    Batched over rows of xhat.  Newton failure raises NonConvergenceError
    (the usual cause is a horizon too large for non-monotone data).
    """
    integ = integ or IntegratorSpec()
    xhat = np.atleast_2d(np.asarray(xhat, dtype=float))
    if t == 0.0:
        return model.U0(xhat)

    def seed_to_X(seeds):
        return _flow(model, seeds, t, integ)[0]

    try:
        seeds = newton_invert_batch(seed_to_X, xhat, xhat.copy(), tol=tol)
    except np.linalg.LinAlgError as e:
        raise NonConvergenceError(
            f"characteristic inversion failed at t={t}: {e}") from e
    return _flow(model, seeds, t, integ)[1]


def make_grid(lo, hi, n, dim) -> np.ndarray:
    """Uniform dim-dimensional evaluation grid, flattened to (n^dim, dim)."""
    axis = np.linspace(lo, hi, n)
    return np.stack(np.meshgrid(*([axis] * dim), indexing="ij"), axis=-1).reshape(-1, dim)


def verify_reduction_identity(model: FiniteStateModel, rmap: ReductionMap,
                              reduced: ReducedFiniteModel, grid=None, times=None,
                              integ: IntegratorSpec | None = None, tol=1e-6,
                              newton_tol=1e-12):
    """sup over grid x times of |U(t,x) - L* U~(t, Lx)|, both sides solved
    independently.  Returns (CheckReport, per-time sup errors)."""
    integ = integ or IntegratorSpec()
    if grid is None:
        grid = make_grid(-2.0, 2.0, 9, rmap.N)
    if times is None:
        times = np.linspace(0.0, 1.0, 11)
    grid = np.atleast_2d(np.asarray(grid, dtype=float))
    per_time = np.empty(len(times))
    worst = -np.inf
    witness = {}
    for k, t in enumerate(times):
        U_full = eval_U(model, float(t), grid, integ, tol=newton_tol)
        U_red = eval_U(reduced, float(t), rmap.apply(grid), integ, tol=newton_tol)
        err = np.abs(U_full - rmap.apply_adjoint(U_red)).max(axis=-1)
        per_time[k] = err.max()
        if per_time[k] > worst:
            worst = per_time[k]
            witness = {"t": float(t), "x": grid[int(np.argmax(err))]}
    report = CheckReport("reduction-identity", bool(worst <= tol), -float(worst),
                         witness, grid.shape[0] * len(times), 0, tol)
    return report, per_time


def fiber_evolution_check(model: FiniteStateModel, rmap: ReductionMap, T,
                          n_pairs=20, seed=0, box=2.0,
                          integ: IntegratorSpec | None = None, tol=1e-8) -> CheckReport:
    """Seeds on a common fiber of L stay on a common fiber: sup_t |L dX| <= tol."""
    integ = integ or IntegratorSpec()
    rng = np.random.default_rng(seed)
    x1 = rng.uniform(-box, box, (n_pairs, rmap.N))
    x2 = x1 + rmap.sample_kernel(rng, (n_pairs,), scale=box)
    t_eval = np.linspace(0.0, T, 21)
    f1 = solve_characteristics(model, x1, T, integ, t_eval)
    f2 = solve_characteristics(model, x2, T, integ, t_eval)
    gap = np.abs(rmap.apply(f1.X) - rmap.apply(f2.X)).max(axis=-1)  # (K, B)
    worst = float(gap.max())
    k, b = np.unravel_index(int(np.argmax(gap)), gap.shape)
    return CheckReport("fiber-evolution", worst <= tol, -worst,
                       {"t": float(t_eval[k]), "x1": x1[b], "x2": x2[b]},
                       n_pairs, seed, tol)


def tangential_motion_check(model: FiniteStateModel, rmap: ReductionMap, T,
                            n_seeds=20, seed=0, box=2.0,
                            integ: IntegratorSpec | None = None, tol=1e-10) -> CheckReport:
    """When G completely reduces, V has no motion tangential to fibers:
    <dV/dt, k> = 0 for k in ker L along every trajectory."""
    integ = integ or IntegratorSpec()
    rng = np.random.default_rng(seed)
    seeds = rng.uniform(-box, box, (n_seeds, rmap.N))
    t_eval = np.linspace(0.0, T, 21)
    fld = solve_characteristics(model, seeds, T, integ, t_eval)
    vdot = model.G(fld.X, fld.V)                    # (K, B, N)
    proj = vdot @ rmap.kernel_basis.T               # components along ker L
    worst = float(np.abs(proj).max())
    return CheckReport("tangential-motion", worst <= tol, -worst,
                       {"n_kernel_dirs": rmap.N - rmap.n}, n_seeds, seed, tol)


def monotone_pairing_check(field: CharacteristicField, tol=1e-10) -> CheckReport:
    """<dX(t), dV(t)> nondecreasing in t across seed pairs (discrete check)."""
    pairing = field.pairing()
    drops = np.diff(pairing, axis=0).min() if pairing.size else 0.0
    worst = float(drops)
    return CheckReport("pairing-nondecreasing", worst >= -tol, worst,
                       {"n_pairs": pairing.shape[1]}, pairing.shape[1], 0, tol)


def pde_residual(model, grid, times, h=1e-3, integ: IntegratorSpec | None = None,
                 newton_tol=1e-12) -> float:
    """Central-difference residual of dU/dt + (F . grad) U - G at grid x times.

    The sampler is eval_U, so the residual floor is the Newton tolerance
    amplified by 1/(2h) on top of the O(h^2) truncation.
    """
    integ = integ or IntegratorSpec()
    grid = np.atleast_2d(np.asarray(grid, dtype=float))
    d = _state_dim(model)
    B = grid.shape[0]
    sup = 0.0
    for t in times:
        if t - h < 0:
            continue
        stencil = [grid]
        for j in range(d):
            e = np.zeros(d)
            e[j] = h
            stencil.extend([grid + e, grid - e])
        pts = np.concatenate(stencil, axis=0)
        U_here = eval_U(model, float(t), pts, integ, tol=newton_tol)
        U_plus = eval_U(model, float(t + h), grid, integ, tol=newton_tol)
        U_minus = eval_U(model, float(t - h), grid, integ, tol=newton_tol)
        U0v = U_here[:B]
        dUdt = (U_plus - U_minus) / (2 * h)
        Fv = model.F(grid, U0v)
        Gv = model.G(grid, U0v)
        adv = np.zeros_like(U0v)
        for j in range(d):
            dU_dxj = (U_here[(1 + 2 * j) * B:(2 + 2 * j) * B]
                      - U_here[(2 + 2 * j) * B:(3 + 2 * j) * B]) / (2 * h)
            adv += Fv[:, j:j + 1] * dU_dxj
        sup = max(sup, float(np.abs(dUdt + adv - Gv).max()))
    return sup


def pde_residual_slope(model, grid, times, hs=(2e-3, 1e-3),
                       integ: IntegratorSpec | None = None) -> tuple:
    """Residual sups at decreasing stencils plus the log-log slope."""
    sups = [pde_residual(model, grid, times, h, integ) for h in hs]
    slope = float(np.polyfit(np.log(hs), np.log(sups), 1)[0])
    return sups, slope
